"""Per-bin detection: zero-ton test, index read-out, single-ton verification."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .pauli import Gf2Matrix, gf2_rank, swap_halves, swap_halves_array, symplectic_array

ZERO, SINGLE, MULTI = "zero-ton", "single-ton", "multi-ton"

# Variance floor used in place of nu^2 so noiseless runs tolerate round-off.
NOISE_FLOOR2 = 1e-24


def sgn(x):
    """0 for x >= 0, 1 for x < 0 (elementwise for arrays)."""
    if np.ndim(x) == 0:
        return 0 if not x < 0 else 1
    return (np.asarray(x) < 0).astype(np.uint8)


@dataclass(frozen=True)
class BinVerdict:
    kind: str
    label: int | None = None
    rate: float | None = None

    def __post_init__(self):
        if self.kind not in (ZERO, SINGLE, MULTI):
            raise ValueError(f"unknown verdict {self.kind!r}")
        if (self.kind == SINGLE) != (self.label is not None and self.rate is not None):
            raise ValueError("label and rate are present exactly for single-tons")
        if self.kind == SINGLE and not self.rate > 0:
            raise ValueError("single-ton rate must be positive")


@dataclass(frozen=True)
class OffsetCodeSpec:
    """Linear code on offset signs.

    The repetition scheme repeats every unit offset ``r`` times; copy ``q`` of a
    row carries replica tag ``q + 1`` so each copy sees fresh noise.  A custom
    scheme supplies its own generator rows and a decoder mapping sign bits to
    ``(label, ok)``.
    """

    n: int
    r: int = 9
    scheme: str = "repetition"
    custom_rows: tuple[int, ...] | None = None
    custom_decoder: Callable[[np.ndarray], tuple[int, bool]] | None = None

    def __post_init__(self):
        if self.scheme == "repetition":
            if self.r < 1:
                raise ValueError("need at least one repetition")
        elif self.scheme == "custom":
            if self.custom_rows is None or self.custom_decoder is None:
                raise ValueError("custom codes need rows and a decoder")
            if gf2_rank(Gf2Matrix(tuple(self.custom_rows), 2 * self.n)) != 2 * self.n:
                raise ValueError("code generator must have rank 2n")
        else:
            raise ValueError(f"unknown code scheme {self.scheme!r}")

    @property
    def rows(self) -> tuple[int, ...]:
        if self.scheme == "custom":
            return tuple(self.custom_rows)
        return tuple(1 << i for i in range(2 * self.n) for _ in range(self.r))

    @property
    def replicas(self) -> tuple[int, ...]:
        if self.scheme == "custom":
            return (0,) * len(self.custom_rows)
        return tuple(q + 1 for _ in range(2 * self.n) for q in range(self.r))

    @property
    def P2(self) -> int:
        return len(self.rows)

    @property
    def generator(self) -> Gf2Matrix:
        return Gf2Matrix(self.rows, 2 * self.n)


def code_encode(m: int, spec: OffsetCodeSpec) -> np.ndarray:
    """Sign bits <g, m> for each generator row g."""
    return symplectic_array(np.array(spec.rows, dtype=np.uint64), m, spec.n)


def code_decode(signs, spec: OffsetCodeSpec) -> tuple[int, bool]:
    """Decode sign bits to a label; ``ok`` is False when a majority vote ties."""
    signs = np.asarray(signs, dtype=np.uint8)
    if signs.size != spec.P2:
        raise ValueError(f"expected {spec.P2} sign bits, got {signs.size}")
    if spec.scheme == "custom":
        return spec.custom_decoder(signs)
    votes = signs.reshape(2 * spec.n, spec.r).sum(axis=1).astype(np.int64)
    ones = 2 * votes > spec.r
    ok = not np.any(2 * votes == spec.r)
    y = int(sum(1 << i for i in np.flatnonzero(ones)))
    # <e_i, m> is bit i of J m, so the label is the half swap of the votes
    return swap_halves(y, spec.n), ok


def estimate_index_basis(U_basis, U0: float, n: int) -> int:
    """Label from sign flips of the unit-offset bins relative to the zero-offset bin.

    ``U_basis[i]`` is the bin value at offset e_i (x-bits first, then z-bits).
    """
    U_basis = np.asarray(U_basis)
    if U_basis.size != 2 * n:
        raise ValueError(f"expected {2 * n} basis values")
    y_bits = sgn(U_basis) ^ sgn(U0)
    y = int(sum(1 << i for i in np.flatnonzero(y_bits)))
    return swap_halves(y, n)


def basis_readout_pattern(m: int, n: int) -> str:
    """The relative sign pattern a noiseless single-ton of label m shows on e_1..e_2n."""
    y = swap_halves(m, n)
    return "".join(str((y >> i) & 1) for i in range(2 * n))


def singleton_flip_probability(p_m: float, T: float, nu2: float) -> float:
    """Upper bound on the chance noise flips the sign of a single-ton bin."""
    if p_m <= 0:
        raise ValueError("rate must be positive")
    v = T * nu2
    if v <= 0:
        return 0.0
    return math.sqrt(v / (2 * math.pi * p_m ** 2)) * math.exp(-p_m ** 2 / (2 * v))


def effective_gammas(gamma1: float, gamma2: float, eps0: float | None, T: float, nu2: float) -> tuple[float, float]:
    """Threshold margins; with a declared rate floor they follow the SNR margin."""
    if eps0 is None or nu2 <= 0:
        return gamma1, gamma2
    snr = eps0 ** 2 / (T * nu2)
    return 0.9 * min(1.0, snr), 0.9 * min(1.0, snr / 2)


def _repetition_decode_batch(bits: np.ndarray, spec: OffsetCodeSpec) -> tuple[np.ndarray, np.ndarray]:
    """Majority decode of (P2, K) sign bits; returns labels and a no-tie mask."""
    K = bits.shape[1]
    votes = bits.reshape(2 * spec.n, spec.r, K).sum(axis=1, dtype=np.int64)
    ones = (2 * votes > spec.r).astype(np.uint64)
    ok = ~np.any(2 * votes == spec.r, axis=0)
    weights = np.uint64(1) << np.arange(2 * spec.n, dtype=np.uint64)
    y = (ones * weights[:, None]).sum(axis=0, dtype=np.uint64)
    return swap_halves_array(y, spec.n), ok


def basis_readout_batch(U: np.ndarray, D) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised basis read-out over the columns of a (P, K) block."""
    zero, pos = D.basis_positions
    if zero < 0 or np.any(pos < 0):
        raise ValueError("basis read-out needs the zero and all unit offsets")
    flips = (U[pos] < 0) ^ (U[zero] < 0)
    weights = np.uint64(1) << np.arange(2 * D.n, dtype=np.uint64)
    y = (flips.astype(np.uint64) * weights[:, None]).sum(axis=0, dtype=np.uint64)
    return swap_halves_array(y, D.n), np.ones(U.shape[1], dtype=bool)


ZERO_CODE, SINGLE_CODE, MULTI_CODE = 0, 1, 2
_KIND_OF_CODE = (ZERO, SINGLE, MULTI)


def detect_batch(
    U,
    D,
    T,
    nu2: float,
    gamma1: float = 0.4,
    gamma2: float = 0.4,
    code: OffsetCodeSpec | None = None,
    eps0: float | None = None,
    readout: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None,
    bin_index=None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Classify K bins at once from a (P, K) block of offset values.

    Returns verdict codes (0 zero-ton, 1 single-ton, 2 multi-ton), decoded
    labels and value estimates.  Labels and values are only meaningful where
    the code is 1.
    """
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2 or U.shape[0] != D.P:
        raise ValueError(f"expected a ({D.P}, K) block, got {U.shape}")
    K = U.shape[1]
    T = np.broadcast_to(np.asarray(T, dtype=np.float64), (K,))
    if eps0 is not None and nu2 > 0:
        snr = eps0 ** 2 / (T * nu2)
        g1, g2 = 0.9 * np.minimum(1.0, snr), 0.9 * np.minimum(1.0, snr / 2)
    else:
        g1, g2 = gamma1, gamma2
    var = T * max(nu2, NOISE_FLOOR2)
    rpos = D.positions("random")
    if rpos.size == 0:
        rpos = np.arange(D.P)
    # one contiguous row per bin, so each reduction matches the single-bin call bit for bit
    ur = np.ascontiguousarray(U[rpos].T)
    zero = np.mean(ur * ur, axis=1) <= (1 + g1) * var
    if code is not None and D.P2:
        bits = (U[D.positions("coded")] < 0).astype(np.uint8)
        if code.scheme == "repetition":
            m, ok = _repetition_decode_batch(bits, code)
        else:
            pairs = [code_decode(bits[:, k], code) for k in range(K)]
            m = np.array([a for a, _ in pairs], dtype=np.uint64)
            ok = np.array([b for _, b in pairs], dtype=bool)
    elif readout is not None:
        m, ok = readout(U, np.zeros(K, dtype=np.int64) if bin_index is None else np.asarray(bin_index))
    else:
        m, ok = basis_readout_batch(U, D)
    signs = 1.0 - 2.0 * symplectic_array(m[:, None], D.labels[rpos][None, :], D.n)
    p = np.mean(signs * ur, axis=1)
    resid = np.mean((ur - signs * p[:, None]) ** 2, axis=1)
    single = ~zero & ok & (p > 0) & (resid <= (1 + g2) * var)
    kinds = np.where(zero, ZERO_CODE, np.where(single, SINGLE_CODE, MULTI_CODE)).astype(np.uint8)
    return kinds, m, p


def detect(
    U,
    D,
    T: float,
    nu2: float,
    gamma1: float = 0.4,
    gamma2: float = 0.4,
    code: OffsetCodeSpec | None = None,
    eps0: float | None = None,
    readout=None,
    bin_index: int | None = None,
) -> BinVerdict:
    """Classify one bin from its P offset values.

    The random offsets drive the energy and residual tests (all offsets are used
    if there are none).  The index comes from the coded offsets when a code is
    given, otherwise from ``readout`` or the basis offsets.
    """
    U = np.asarray(U, dtype=np.float64)
    if U.size != D.P:
        raise ValueError(f"bin has {U.size} values, offsets have {D.P}")
    kinds, m, p = detect_batch(U.reshape(-1, 1), D, [T], nu2, gamma1, gamma2, code, eps0, readout,
                               None if bin_index is None else [bin_index])
    kind = _KIND_OF_CODE[int(kinds[0])]
    if kind == SINGLE:
        return BinVerdict(SINGLE, int(m[0]), float(p[0]))
    return BinVerdict(kind)
