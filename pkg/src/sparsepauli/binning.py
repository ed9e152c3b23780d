"""Coset sampling of eigenvalues and the per-group bin transforms."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import EigenvalueOracle, SparsePauliChannel
from .design import SubsamplingDesign
from .pauli import symplectic_array
from .wht import wht_fast_inplace

_MAGIC = b"SPBT"
_HEADER = struct.Struct("<4sIIIIdq")


@dataclass
class BinTensor:
    """Bin values ``U[c, t, j]``, variance multipliers ``T[c, j]`` and base variance ``nu2``."""

    U: np.ndarray
    T: np.ndarray
    nu2: float
    queries: int = 0
    calls: int = 0

    def __post_init__(self):
        self.U = np.ascontiguousarray(self.U, dtype=np.float64)
        self.T = np.ascontiguousarray(self.T, dtype=np.float64)
        if self.U.ndim != 3 or self.T.shape != (self.U.shape[0], self.U.shape[2]):
            raise ValueError(f"inconsistent shapes U{self.U.shape} T{self.T.shape}")
        if self.nu2 < 0:
            raise ValueError("nu2 must be non-negative")

    @property
    def C(self) -> int:
        return self.U.shape[0]

    @property
    def P(self) -> int:
        return self.U.shape[1]

    @property
    def B(self) -> int:
        return self.U.shape[2]

    def copy(self) -> "BinTensor":
        return BinTensor(self.U.copy(), self.T.copy(), self.nu2, self.queries, self.calls)

    def save(self, path) -> None:
        """Binary dump: fixed header, then U and T as little-endian float64."""
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, 1, self.C, self.P, self.B, self.nu2, self.queries))
            fh.write(self.U.astype("<f8").tobytes())
            fh.write(self.T.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "BinTensor":
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, ver, C, P, B, nu2, queries = _HEADER.unpack_from(raw)
        if magic != _MAGIC or ver != 1:
            raise ValueError(f"{path}: not a bin tensor dump")
        nu, nt = C * P * B, C * B
        if len(raw) != _HEADER.size + 8 * (nu + nt):
            raise ValueError(f"{path}: payload size does not match shape ({C}, {P}, {B})")
        body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        return cls(body[:nu].reshape(C, P, B).copy(), body[nu:].reshape(C, B).copy(), nu2, queries)


def bin_transform(values: np.ndarray, b: int) -> np.ndarray:
    """(1/B) times the transform over bin space, using the bin form for the kernel."""
    ordering = "symplectic" if b % 2 == 0 else "natural"
    out = wht_fast_inplace(np.array(values, dtype=np.float64, copy=True), ordering)
    out /= 1 << b
    return out


def _check_design(d: SubsamplingDesign) -> int:
    Ps = {g.offsets.P for g in d.groups}
    if len(Ps) != 1:
        raise ValueError("all groups must have the same number of offsets")
    return Ps.pop()


def gather_queries(d: SubsamplingDesign) -> tuple[np.ndarray, np.ndarray]:
    """Indices and replica tags for every (c, t, l), shaped (C, P, B)."""
    idx = np.stack([g.query_indices() for g in d.groups])
    reps = np.stack([np.broadcast_to(g.offsets.replicas[:, None], (g.offsets.P, d.B)) for g in d.groups])
    return idx, reps.astype(np.uint64)


def query_values(orc: EigenvalueOracle, d: SubsamplingDesign) -> np.ndarray:
    """Oracle values for every (c, t, l); each distinct (index, replica) is asked once."""
    idx, reps = gather_queries(d)
    flat_i, flat_r = idx.ravel(), reps.ravel()
    if not flat_r.any():
        key = flat_i
    elif 2 * d.n + 8 <= 64 and flat_r.max() < 256:
        key = flat_i | (flat_r << np.uint64(2 * d.n))
    else:
        key = np.stack([flat_i, flat_r], axis=1)
    _, first, inv = np.unique(key, return_index=True, return_inverse=True, axis=0 if key.ndim == 2 else None)
    inv = inv.ravel()
    vals = orc.query(flat_i[first], flat_r[first])
    return vals[inv].reshape(idx.shape)


def bins_from_values(values: np.ndarray, d: SubsamplingDesign, xi: float) -> BinTensor:
    """Transform gathered (C, P, B) eigenvalue samples into a bin tensor."""
    U = bin_transform(values, d.b)
    return BinTensor(U, np.ones((d.C, d.B)), xi ** 2 / d.B)


def subsample_bins(orc: EigenvalueOracle, d: SubsamplingDesign) -> BinTensor:
    """Query the oracle along every offset coset and transform each to bins."""
    _check_design(d)
    if getattr(orc, "fast_cosets", False):
        vals = np.stack([orc.query_coset(g.coset_columns, g.offsets.labels, g.offsets.replicas) for g in d.groups])
    else:
        vals = query_values(orc, d)
    bins = bins_from_values(vals, d, orc.xi)
    bins.queries = orc.queries
    bins.calls = orc.calls
    return bins


def bin_observation_bruteforce(ch: SparsePauliChannel, d: SubsamplingDesign) -> BinTensor:
    """Noiseless bins built by hashing each supported label directly."""
    P = _check_design(d)
    U = np.zeros((d.C, P, d.B))
    labels, probs = ch.labels, ch.probs
    for c, g in enumerate(d.groups):
        j = g.hash(labels)
        signs = 1.0 - 2.0 * symplectic_array(g.offsets.labels[:, None], labels[None, :], d.n)
        for t in range(P):
            U[c, t] = np.bincount(j, weights=probs * signs[t], minlength=d.B)
    return BinTensor(U, np.ones((d.C, d.B)), 0.0)
