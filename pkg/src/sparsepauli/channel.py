"""Sparse Pauli channels, their eigenvalues, synthetic generators and a noisy oracle."""

from __future__ import annotations

import csv
import json
import math
import threading
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .pauli import (
    DimensionError,
    PauliLabel,
    label_to_string,
    label_to_xz,
    parse_label,
    support_pattern,
    symplectic_array,
)
from .wht import wht

SUM_TOL = 1e-12
MAX_QUBITS = 32


class NormalizationError(ValueError):
    """Rates do not sum to one; ``deficit`` is 1 minus the observed total."""

    def __init__(self, total: float):
        self.deficit = 1.0 - total
        super().__init__(f"rates sum to {total!r} (deficit {self.deficit:.3e})")


def _as_bits(key, n: int) -> int:
    if isinstance(key, PauliLabel):
        if key.n != n:
            raise DimensionError(f"label has {key.n} qubits, channel has {n}")
        return key.bits
    if isinstance(key, str):
        return parse_label(key, n)
    bits = int(key)
    if not 0 <= bits < (1 << (2 * n)):
        raise DimensionError(f"label {bits} does not fit in {2 * n} bits")
    return bits


@dataclass(frozen=True)
class SparsePauliChannel:
    """Map from Pauli label (raw 2n-bit int) to error rate.

    Keys given as ``PauliLabel`` or strings are normalised to ints.  The identity
    is label 0.
    """

    n: int
    rates: Mapping[int, float]

    def __post_init__(self):
        if not 1 <= self.n <= MAX_QUBITS:
            raise DimensionError(f"n must be in [1, {MAX_QUBITS}]")
        clean: dict[int, float] = {}
        for k, v in self.rates.items():
            bits = _as_bits(k, self.n)
            if bits in clean:
                raise ValueError(f"duplicate label {label_to_string(bits, self.n)}")
            v = float(v)
            if not v >= 0.0:
                raise ValueError(f"negative or NaN rate {v} for {label_to_string(bits, self.n)}")
            clean[bits] = v
        total = math.fsum(clean.values())
        if abs(total - 1.0) > SUM_TOL:
            raise NormalizationError(total)
        object.__setattr__(self, "rates", clean)

    @property
    def sparsity(self) -> int:
        return len(self.rates)

    @property
    def identity_rate(self) -> float:
        return self.rates.get(0, 0.0)

    @cached_property
    def labels(self) -> np.ndarray:
        return np.array(sorted(self.rates), dtype=np.uint64)

    @cached_property
    def probs(self) -> np.ndarray:
        return np.array([self.rates[int(k)] for k in self.labels], dtype=np.float64)

    def dense(self) -> np.ndarray:
        """Length-4^n rate vector indexed by label bits (small n only)."""
        if self.n > 13:
            raise MemoryError("dense vectors are limited to n <= 13")
        p = np.zeros(1 << (2 * self.n))
        p[self.labels.astype(np.intp)] = self.probs
        return p

    @cached_property
    def _dense_eigenvalues(self) -> np.ndarray:
        return wht(self.dense(), "symplectic")

    def __eq__(self, other) -> bool:
        return isinstance(other, SparsePauliChannel) and self.n == other.n and self.rates == other.rates

    def __hash__(self):
        return hash((self.n, tuple(sorted(self.rates.items()))))

    def items_sorted(self) -> list[tuple[int, float]]:
        """Entries by descending rate, ties broken by label word."""
        return sorted(
            self.rates.items(), key=lambda kv: (-kv[1], label_to_string(kv[0], self.n))
        )


def eigenvalue(ch: SparsePauliChannel, k) -> float:
    """Exact eigenvalue at one label."""
    return float(eigenvalues(ch, np.array([_as_bits(k, ch.n)], dtype=np.uint64))[0])


def eigenvalues(ch: SparsePauliChannel, ks) -> np.ndarray:
    """Exact eigenvalues at an array of labels.

    Sums over the support in chunks, or reads a cached dense transform when that
    is cheaper.
    """
    ks = np.asarray(ks, dtype=np.uint64).ravel()
    s = ch.sparsity
    if ch.n <= 12 and (1 << (2 * ch.n)) * 2 * ch.n < ks.size * s:
        return ch._dense_eigenvalues[ks.astype(np.intp)]
    out = np.empty(ks.size)
    chunk = max(1, (1 << 22) // max(s, 1))
    labels, probs = ch.labels, ch.probs
    for a in range(0, ks.size, chunk):
        par = symplectic_array(ks[a:a + chunk, None], labels[None, :], ch.n)
        out[a:a + chunk] = (1.0 - 2.0 * par) @ probs
    return out


def coset_eigenvalues(ch: SparsePauliChannel, generators: Sequence[int], offsets) -> np.ndarray:
    """Exact eigenvalues at every ``span(generators) + d`` for each offset d.

    Row t, column l holds the eigenvalue at ``d_t + sum_k l_k g_k``.  Hashing the
    support by its commutation pattern with the generators reduces each row to
    one natural-order transform of length 2^b.
    """
    gens = np.asarray(generators, dtype=np.uint64)
    offsets = np.atleast_1d(np.asarray(offsets, dtype=np.uint64))
    labels, probs = ch.labels, ch.probs
    h = np.zeros(labels.size, dtype=np.int64)
    for k, g in enumerate(gens):
        h |= symplectic_array(g, labels, ch.n).astype(np.int64) << k
    signs = 1.0 - 2.0 * symplectic_array(offsets[:, None], labels[None, :], ch.n)
    B = 1 << gens.size
    A = np.stack([np.bincount(h, weights=probs * signs[t], minlength=B) for t in range(offsets.size)])
    return wht(A, "natural")


# ---------------------------------------------------------------- generators


def _random_labels(n: int, count: int, rng: np.random.Generator, exclude: Iterable[int] = (0,)) -> list[int]:
    """Distinct labels drawn uniformly from all 2n-bit values outside ``exclude``."""
    total = 1 << (2 * n)
    excl = set(int(e) for e in exclude)
    if count > total - len(excl):
        raise ValueError(f"cannot draw {count} distinct labels on {n} qubits")
    if total <= (1 << 20):
        pool = np.setdiff1d(np.arange(total, dtype=np.int64), np.fromiter(excl, np.int64, len(excl)))
        return [int(v) for v in rng.choice(pool, size=count, replace=False)]
    mask = np.uint64(total - 1) if 2 * n < 64 else np.uint64(0xFFFFFFFFFFFFFFFF)
    out: list[int] = []
    seen = set(excl)
    while len(out) < count:
        draw = rng.bit_generator.random_raw(2 * (count - len(out)) + 8) & mask
        for v in draw.tolist():
            if v not in seen:
                seen.add(v)
                out.append(v)
                if len(out) == count:
                    break
    return out


def _floored_split(raw: np.ndarray, floor: float, total: float) -> np.ndarray:
    """Affinely rescale draws above ``floor`` so they sum to ``total`` and stay >= floor."""
    excess = raw - floor
    room = total - floor * raw.size
    if excess.sum() <= 0:
        return np.full(raw.size, total / raw.size)
    return floor + excess * (room / excess.sum())


def random_sparse_channel(
    n: int,
    s: int,
    eps0: float,
    p_id: float,
    seed: int,
    eps_max: float | None = None,
) -> SparsePauliChannel:
    """Identity plus ``s - 1`` uniformly random labels with log-uniform rates.

    Non-identity rates are drawn log-uniformly over ``[eps0, eps_max]`` and then
    rescaled above the floor ``eps0`` so the identity keeps exactly ``p_id``.
    """
    if s < 1 or s > 4 ** n:
        raise ValueError(f"sparsity {s} outside [1, 4^n]")
    if s == 1:
        return SparsePauliChannel(n, {0: 1.0})
    if eps0 <= 0 or p_id < 0 or p_id + s * eps0 > 1.0:
        raise ValueError(
            f"infeasible mass split: p_id={p_id} with {s} rates of at least {eps0}"
        )
    rng = np.random.default_rng(seed)
    labels = _random_labels(n, s - 1, rng)
    rest = 1.0 - p_id
    hi = rest if eps_max is None else eps_max
    hi = max(hi, eps0)
    raw = np.exp(rng.uniform(math.log(eps0), math.log(hi), size=s - 1))
    rates = _floored_split(raw, eps0, rest)
    table = {0: p_id}
    table.update(zip(labels, rates.tolist()))
    return _renormalised(n, table)


# Piecewise log-uniform tail: (low, high, count).  Only the top segment is
# rescaled to fix the total, so the decade counts are exact by construction.
DEFAULT_TAIL_PROFILE = ((1e-5, 5e-3, 200), (1e-6, 1e-5, 400), (1e-8, 1e-6, 1400))


def tail_profile_channel(
    n: int,
    p_id: float = 0.86,
    seed: int = 0,
    profile: Sequence[tuple[float, float, int]] = DEFAULT_TAIL_PROFILE,
) -> SparsePauliChannel:
    """Synthetic device-like channel with a prescribed number of rates per band."""
    rng = np.random.default_rng(seed)
    count = sum(c for _, _, c in profile)
    labels = _random_labels(n, count, rng)
    parts = [np.exp(rng.uniform(math.log(lo), math.log(hi), size=c)) for lo, hi, c in profile]
    lower_mass = sum(p.sum() for p in parts[1:])
    top_lo = profile[0][0]
    need = 1.0 - p_id - lower_mass
    if need <= top_lo * profile[0][2]:
        raise ValueError("tail profile cannot carry the requested non-identity mass")
    parts[0] = _floored_split(parts[0], top_lo, need)
    table = {0: p_id}
    table.update(zip(labels, np.concatenate(parts).tolist()))
    return _renormalised(n, table)


def _renormalised(n: int, table: dict[int, float]) -> SparsePauliChannel:
    """Absorb float round-off in the identity entry so the total is 1."""
    others = math.fsum(v for k, v in table.items() if k != 0)
    table[0] = 1.0 - others
    if table[0] < 0:
        raise ValueError("non-identity mass exceeds 1")
    return SparsePauliChannel(n, table)


def random_plants(
    n: int,
    count: int,
    seed: int,
    mean: float = 0.005,
    std: float = 0.001,
    exclude: Iterable[int] = (0,),
) -> list[tuple[int, float]]:
    """Uniformly random labels with normal(mean, std) rates truncated to be positive."""
    rng = np.random.default_rng(seed)
    labels = _random_labels(n, count, rng, exclude)
    rates = []
    while len(rates) < count:
        r = rng.normal(mean, std)
        if r > 0:
            rates.append(float(r))
    return list(zip(labels, rates))


def plant_paulis(ch: SparsePauliChannel, plants: Sequence[tuple[object, float]]) -> SparsePauliChannel:
    """Insert or overwrite entries, paying for the added mass out of the identity."""
    if not plants:
        return ch
    table = dict(ch.rates)
    for key, rate in plants:
        bits = _as_bits(key, ch.n)
        if bits == 0:
            raise ValueError("cannot plant the identity")
        if not rate > 0:
            raise ValueError(f"planted rate must be positive, got {rate}")
        table[bits] = float(rate)
    others = math.fsum(v for k, v in table.items() if k != 0)
    if others > 1.0:
        raise ValueError(f"planted mass overflows: identity would be {1.0 - others:.3e}")
    table[0] = 1.0 - others
    return SparsePauliChannel(ch.n, table)


def _pattern_bits(key, n: int) -> int:
    if isinstance(key, str):
        if len(key) != n or set(key) - {"0", "1"}:
            raise ValueError(f"malformed weight pattern {key!r}")
        return sum(int(c) << q for q, c in enumerate(key))
    t = int(key)
    if not 0 <= t < (1 << n):
        raise DimensionError(f"pattern {t} wider than {n} qubits")
    return t


def _labels_on_pattern(t: int, n: int) -> np.ndarray:
    """All 3^w labels acting as X, Y or Z exactly on the qubits set in ``t``."""
    out = np.zeros(1, dtype=np.uint64)
    for q in range(n):
        if (t >> q) & 1:
            xq, zq = np.uint64(1 << q), np.uint64(1 << (q + n))
            out = np.concatenate([out | xq, out | xq | zq, out | zq])
    return out


def extrapolate_local_averages(avg: Mapping, n: int, seed: int) -> SparsePauliChannel:
    """Split each pattern's mass across its 3^w Paulis with a flat Dirichlet draw."""
    rng = np.random.default_rng(seed)
    items = sorted((_pattern_bits(k, n), float(v)) for k, v in avg.items())
    if any(v < 0 for _, v in items):
        raise ValueError("negative mass in local averages")
    total = math.fsum(v for _, v in items)
    if abs(total - 1.0) > SUM_TOL:
        raise NormalizationError(total)
    table: dict[int, float] = {}
    for t, mass in items:
        labels = _labels_on_pattern(t, n)
        if labels.size == 1:
            share = np.array([mass])
        else:
            share = rng.dirichlet(np.ones(labels.size)) * mass
            # put the float residue on the largest share so the marginal is exact
            share[np.argmax(share)] += mass - math.fsum(share)
        for lab, r in zip(labels.tolist(), share.tolist()):
            if r > 0:
                table[lab] = r
    return SparsePauliChannel(n, table)


def local_averages(ch: SparsePauliChannel) -> dict[int, float]:
    """Marginalise rates onto qubit-support patterns."""
    out: dict[int, float] = {}
    for k, v in ch.rates.items():
        t = support_pattern(k, ch.n)
        out[t] = out.get(t, 0.0) + v
    return out


def tail_counts(ch: SparsePauliChannel, thresholds=(1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)) -> dict[float, int]:
    """Number of non-identity rates strictly above each threshold."""
    rates = np.array([v for k, v in ch.rates.items() if k != 0])
    return {t: int((rates > t).sum()) for t in thresholds}


# ---------------------------------------------------------------- oracle

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)


def _mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finaliser, elementwise on uint64 arrays."""
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def keyed_normals(seed: int, index, replica=0) -> np.ndarray:
    """Standard normals that depend only on (seed, index, replica)."""
    index = np.asarray(index, dtype=np.uint64)
    replica = np.broadcast_to(np.asarray(replica, dtype=np.uint64), index.shape)
    with np.errstate(over="ignore"):
        s = _mix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) + _GOLD)
        h = _mix64(index ^ s)
        h = _mix64(h + (replica + np.uint64(1)) * _GOLD)
        a = _mix64(h ^ np.uint64(0x5851F42D4C957F2D))
        b = _mix64(h ^ np.uint64(0x14057B7EF767814F))
    u1 = ((a >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    u2 = (b >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


class EigenvalueOracle:
    """Noisy query access to a channel's eigenvalues.

    Each query returns the exact eigenvalue plus N(0, xi^2) noise that is a pure
    function of (seed, index, replica).  Replica tags let a caller ask for
    independent repeat measurements of one index.  With ``dedup`` on, the
    counter tracks distinct (index, replica) keys; otherwise it counts calls.
    """

    def __init__(self, channel: SparsePauliChannel, xi: float = 0.0, seed: int = 0,
                 mode: str | None = None, dedup: bool = True, record: bool = False,
                 fast_cosets: bool = True):
        if xi < 0:
            raise ValueError("xi must be non-negative")
        self.channel = channel
        self.xi = float(xi)
        self.seed = int(seed)
        self.mode = mode or ("gaussian" if xi > 0 else "exact")
        if self.mode not in ("exact", "gaussian"):
            raise ValueError(f"unknown oracle mode {self.mode!r}")
        self.dedup = dedup
        self.record = record
        self.fast_cosets = fast_cosets
        self._lock = threading.Lock()
        self._calls = 0
        self._keys: list[np.ndarray] = []
        self._log: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []

    @property
    def n(self) -> int:
        return self.channel.n

    @property
    def nu_scale(self) -> float:
        return self.xi

    def query(self, k, replica=0):
        """Scalar or array query; arrays are evaluated in one vectorised pass."""
        scalar = np.ndim(k) == 0 and not isinstance(k, np.ndarray)
        if isinstance(k, (PauliLabel, str)):
            k = _as_bits(k, self.n)
        ks = np.atleast_1d(np.asarray(k, dtype=np.uint64)).ravel()
        reps = np.broadcast_to(np.asarray(replica, dtype=np.uint64), ks.shape)
        vals = eigenvalues(self.channel, ks)
        if self.mode == "gaussian" and self.xi > 0:
            vals = vals + self.xi * keyed_normals(self.seed, ks, reps)
        with self._lock:
            self._calls += ks.size
            if self.dedup:
                self._keys.append((ks.copy(), np.array(reps, dtype=np.uint64)))
            if self.record:
                self._log.append((ks.copy(), np.array(reps), vals.copy()))
        return float(vals[0]) if scalar else vals

    def query_coset(self, generators: Sequence[int], offsets, replicas=0) -> np.ndarray:
        """Values at ``span(generators) + d_t`` for each offset, shaped (P, 2^b).

        Equivalent to querying every index individually (same noise, same
        counting) but evaluates the exact part through :func:`coset_eigenvalues`.
        """
        from .pauli import span

        offsets = np.atleast_1d(np.asarray(offsets, dtype=np.uint64))
        reps = np.broadcast_to(np.asarray(replicas, dtype=np.uint64), offsets.shape)
        idx = span(generators)[None, :] ^ offsets[:, None]
        rr = np.broadcast_to(reps[:, None], idx.shape)
        vals = coset_eigenvalues(self.channel, generators, offsets)
        if self.mode == "gaussian" and self.xi > 0:
            vals = vals + self.xi * keyed_normals(self.seed, idx, rr)
        with self._lock:
            self._calls += idx.size
            if self.dedup:
                self._keys.append((idx.ravel().copy(), np.array(rr, dtype=np.uint64).ravel()))
            if self.record:
                self._log.append((idx.ravel().copy(), np.array(rr).ravel(), vals.ravel().copy()))
        return vals

    def _distinct(self) -> int:
        ks = np.concatenate([k for k, _ in self._keys])
        rs = np.concatenate([r for _, r in self._keys])
        if 2 * self.n + 8 <= 64 and rs.max(initial=0) < 256:
            # exact packing: replica tags sit above the 2n label bits
            packed = np.unique(ks | (rs << np.uint64(2 * self.n)))
            self._keys = [(packed & np.uint64((1 << (2 * self.n)) - 1), packed >> np.uint64(2 * self.n))]
            return int(packed.size)
        pairs = np.unique(np.stack([ks, rs], axis=1), axis=0)
        self._keys = [(pairs[:, 0].copy(), pairs[:, 1].copy())]
        return int(pairs.shape[0])

    @property
    def calls(self) -> int:
        return self._calls

    @property
    def queries(self) -> int:
        """Distinct keys when deduplicating, otherwise total calls."""
        with self._lock:
            if not self.dedup:
                return self._calls
            return self._distinct() if self._keys else 0

    def recorded(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct replica-0 indices queried so far with their returned values."""
        if not self._log:
            return np.zeros(0, dtype=np.uint64), np.zeros(0)
        ks = np.concatenate([a for a, r, _ in self._log])
        rs = np.concatenate([r for a, r, _ in self._log])
        vs = np.concatenate([v for _, _, v in self._log])
        keep = rs == 0
        ks, idx = np.unique(ks[keep], return_index=True)
        return ks, vs[keep][idx]


def oracle_query(orc: EigenvalueOracle, k, replica=0):
    return orc.query(k, replica)


# ---------------------------------------------------------------- file formats


def channel_to_dict(ch: SparsePauliChannel, extra: Mapping | None = None) -> dict:
    d = {
        "n": ch.n,
        "identity": ch.identity_rate,
        "rates": [
            {"pauli": label_to_string(k, ch.n), "p": v}
            for k, v in ch.items_sorted()
            if k != 0
        ],
    }
    if extra:
        d.update(extra)
    return d


def channel_from_dict(d: Mapping) -> SparsePauliChannel:
    try:
        n = int(d["n"])
        table = {0: float(d["identity"])}
        for entry in d["rates"]:
            bits = parse_label(entry["pauli"], n)
            if bits in table:
                raise ValueError(f"duplicate label {entry['pauli']!r}")
            table[bits] = float(entry["p"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed channel record: {exc}") from exc
    return SparsePauliChannel(n, table)


def save_channel(ch: SparsePauliChannel, path, extra: Mapping | None = None) -> None:
    Path(path).write_text(json.dumps(channel_to_dict(ch, extra), indent=1) + "\n")


def load_channel(path) -> SparsePauliChannel:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from exc
    return channel_from_dict(d)


def save_eigenvalues(path, labels, values, n: int) -> None:
    labels = np.asarray(labels, dtype=np.uint64)
    values = np.asarray(values, dtype=np.float64)
    if labels.shape != values.shape:
        raise DimensionError("labels and values differ in length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "value"])
        for k, v in zip(labels.tolist(), values.tolist()):
            w.writerow([label_to_xz(k, n), repr(v)])


def parse_eigenvalue_row(row: Sequence[str]) -> tuple[PauliLabel, float]:
    if len(row) != 2:
        raise ValueError(f"expected 2 fields, got {len(row)}")
    from .pauli import label_from_string

    return label_from_string(row[0]), float(row[1])


def load_eigenvalues(path) -> tuple[np.ndarray, np.ndarray, int]:
    """Read an eigenvalue CSV; returns (labels, values, n)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["index", "value"]:
        raise ValueError(f"{path}: missing 'index,value' header")
    labels, values, n = [], [], None
    for i, row in enumerate(rows[1:], start=2):
        try:
            lab, v = parse_eigenvalue_row(row)
        except ValueError as exc:
            raise ValueError(f"{path}:{i}: {exc}") from exc
        if n is None:
            n = lab.n
        elif lab.n != n:
            raise ValueError(f"{path}:{i}: qubit count changes from {n} to {lab.n}")
        labels.append(lab.bits)
        values.append(v)
    return np.array(labels, dtype=np.uint64), np.array(values), (n or 0)
