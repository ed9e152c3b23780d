"""Peeling decoders: the coded-offset decoder with variance tracking, and the
relaxation-schedule decoder for local-stabilizer designs."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .binning import BinTensor
from .design import GroupDesign, SubsamplingDesign
from .detector import (
    NOISE_FLOOR2,
    OffsetCodeSpec,
    SINGLE_CODE,
    detect_batch,
)
from .pauli import bin_form_apply, label_to_string, parse_label, swap_halves_array, symplectic_array

log = logging.getLogger(__name__)

COMPLETE, INCOMPLETE = "complete", "incomplete"


def default_iterations(s: int) -> int:
    return max(10, math.ceil(3 * math.log2(math.log2(max(s, 4)))) + 3)


def predicted_edge_survival(C: int, eta: float, l: int) -> float:
    """Probability an edge survives l peeling rounds on a tree-like hash graph."""
    if C < 2 or eta <= 0 or l < 0:
        raise ValueError("need C >= 2, eta > 0, l >= 0")
    p = 1.0
    for _ in range(l):
        p = (1.0 - math.exp(-p / eta)) ** (C - 1)
    return p


def stopping_set(labels, design: SubsamplingDesign) -> set[int]:
    """Labels no peeling order can isolate: the core left after repeatedly
    removing any label that sits alone in one of its bins."""
    labels = [int(m) for m in labels]
    where = {m: [(c, int(g.hash(m))) for c, g in enumerate(design.groups)] for m in labels}
    occupants: dict[tuple[int, int], set[int]] = {}
    for m, bins in where.items():
        for key in bins:
            occupants.setdefault(key, set()).add(m)
    alive = set(labels)
    queue = [key for key, occ in occupants.items() if len(occ) == 1]
    while queue:
        key = queue.pop()
        occ = occupants[key]
        if len(occ) != 1:
            continue
        (m,) = occ
        alive.discard(m)
        for key2 in where[m]:
            occupants[key2].discard(m)
            if len(occupants[key2]) == 1:
                queue.append(key2)
    return alive


def completion_tolerance(nu2: float, s: int) -> float:
    return max(10.0 * math.sqrt(nu2) * math.sqrt(max(s, 1)), 1e-9)


@dataclass(frozen=True)
class PeelConfig:
    """Decoder settings.

    ``max_iter`` bounds sweeps (None picks a default from the sparsity hint).
    ``zero_sens`` is the initial zero threshold in units of nu^2 and
    ``zero_step`` its divisor per relaxation; ``band`` and ``band_step`` are the
    relative single-ton band and its increment; ``relaxations`` caps how often
    the schedule may relax before giving up.
    """

    max_iter: int | None = None
    gamma1: float = 0.4
    gamma2: float = 0.4
    eps0: float | None = None
    zero_sens: float = 9.0
    zero_step: float = math.sqrt(10.0)
    band: float = 0.25
    band_step: float = 0.25
    relaxations: int = 4
    tau_sum: float | None = None
    sparsity_hint: int | None = None
    hash_check: bool = True

    def __post_init__(self):
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.zero_sens <= 0 or self.band <= 0:
            raise ValueError("sensitivities must be positive")
        if self.zero_step < 1 or self.band_step < 0 or self.relaxations < 0:
            raise ValueError("relaxation steps must not tighten the tests")


@dataclass
class RecoveryResult:
    n: int
    estimates: dict[int, float]
    status: str
    iterations: int
    unresolved: int
    residual_mass: float
    queries: int
    rounds: dict[int, int] = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return math.fsum(self.estimates.values())

    def sorted_items(self) -> list[tuple[int, float]]:
        return sorted(self.estimates.items(), key=lambda kv: (-kv[1], label_to_string(kv[0], self.n)))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "status": self.status,
            "estimates": [
                {"pauli": label_to_string(k, self.n), "rate": v, "round": self.rounds.get(k, 0)}
                for k, v in self.sorted_items()
            ],
            "iterations": self.iterations,
            "unresolved_bins": self.unresolved,
            "residual_mass": self.residual_mass,
            "queries": self.queries,
            "diagnostics": self.diagnostics,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RecoveryResult":
        n = int(d["n"])
        est, rounds = {}, {}
        for e in d["estimates"]:
            k = parse_label(e["pauli"], n)
            if k in est:
                raise ValueError(f"duplicate label {e['pauli']}")
            est[k] = float(e["rate"])
            rounds[k] = int(e.get("round", 0))
        return cls(n, est, d["status"], int(d["iterations"]), int(d["unresolved_bins"]),
                   float(d["residual_mass"]), int(d["queries"]), rounds,
                   d.get("diagnostics", {}), d.get("config", {}))

    def save(self, path, extra: dict | None = None) -> None:
        d = self.to_dict()
        if extra:
            d.update(extra)
        Path(path).write_text(json.dumps(d, indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "RecoveryResult":
        return cls.from_dict(json.loads(Path(path).read_text()))


class _Peeler:
    """Shared bookkeeping: discovered labels and subtraction from other groups."""

    def __init__(self, bins: BinTensor, design: SubsamplingDesign):
        if bins.C != design.C or bins.B != design.B or bins.P != design.P:
            raise ValueError(
                f"bin tensor {bins.U.shape} does not match design ({design.C}, {design.P}, {design.B})"
            )
        self.bins = bins.copy()
        self.design = design
        self.n = design.n
        self.found: dict[int, float] = {}
        self.rounds: dict[int, int] = {}
        self.duplicates = 0
        self.flagged_duplicates = 0
        self.hash_rejects = 0
        self.nu = math.sqrt(bins.nu2)

    def record(self, m: int, p: float, rnd: int) -> bool:
        if m in self.found:
            self.duplicates += 1
            if abs(p - self.found[m]) > 4 * self.nu:
                self.flagged_duplicates += 1
                log.info("label %s rediscovered at %.3e, kept %.3e",
                         label_to_string(m, self.n), p, self.found[m])
            return False
        self.found[m] = p
        self.rounds[m] = rnd
        return True

    def peel_back(self, m: int, p: float, c: int) -> list[tuple[int, int]]:
        """Remove a single-ton from every group except ``c``; returns touched bins."""
        touched = []
        U = self.bins.U
        for c2, g in enumerate(self.design.groups):
            if c2 == c:
                continue
            j2 = g.hash(m)
            signs = 1.0 - 2.0 * symplectic_array(g.offsets.labels, m, self.n)
            U[c2, :, j2] -= p * signs
            touched.append((c2, j2))
        return touched


def _energy(U_c: np.ndarray, rows: np.ndarray) -> np.ndarray:
    sub = U_c[rows]
    return np.einsum("tj,tj->j", sub, sub) / rows.size


def peel(bins: BinTensor, design: SubsamplingDesign, config: PeelConfig | None = None,
         code: OffsetCodeSpec | None = None) -> RecoveryResult:
    """Sweep all bins group by group, recording single-tons and peeling them from
    the other groups while tracking the propagated noise variance."""
    cfg = config or PeelConfig()
    if design.C < 2:
        raise ValueError("peeling needs at least two groups")
    st = _Peeler(bins, design)
    U, T = st.bins.U, st.bins.T
    nu2 = st.bins.nu2
    B, N = design.B, 4 ** design.n
    iters = cfg.max_iter or default_iterations(cfg.sparsity_hint or B)
    readouts = [None if code is not None else _readout_for(g) for g in design.groups]
    t_max, t_breaches = 1.0, 0
    unresolved: list[tuple[int, int]] = []
    used = 0
    for it in range(iters):
        used = it + 1
        new = 0
        unresolved = []
        for c, g in enumerate(design.groups):
            D = g.offsets
            rpos = D.positions("random")
            if rpos.size == 0:
                rpos = np.arange(D.P)
            P1 = rpos.size
            var = T[c] * max(nu2, NOISE_FLOOR2)
            if cfg.eps0 is not None and nu2 > 0:
                g1 = 0.9 * np.minimum(1.0, cfg.eps0 ** 2 / (T[c] * nu2))
            else:
                g1 = cfg.gamma1
            cand = np.flatnonzero(_energy(U[c], rpos) > (1 + g1) * var)
            if cand.size == 0:
                continue
            # U[c] and T[c] are fixed while group c is scanned, so its
            # candidates can be classified together before any peeling
            kinds, labels, rates = detect_batch(U[c][:, cand], D, T[c, cand], nu2, cfg.gamma1, cfg.gamma2,
                                                code, cfg.eps0, readouts[c], cand)
            single = kinds == SINGLE_CODE
            if cfg.hash_check:
                bad = single & (g.hash(labels) != cand)
                st.hash_rejects += int(bad.sum())
                single &= ~bad
            unresolved.extend((c, int(j)) for j in cand[~single])
            for j, m, p in zip(cand[single].tolist(), labels[single].tolist(), rates[single].tolist()):
                if not st.record(m, p, used):
                    continue
                new += 1
                inc = T[c, j] / P1 + (P1 - 1) * B / (P1 * N)
                for c2, j2 in st.peel_back(m, p, c):
                    T[c2, j2] += inc
                    if T[c2, j2] > t_max:
                        t_max = float(T[c2, j2])
                    if T[c2, j2] > 4:
                        t_breaches += 1
                        log.info("variance multiplier %.3f exceeds 4 at group %d bin %d", T[c2, j2], c2, j2)
        if new == 0:
            break
    tau = cfg.tau_sum if cfg.tau_sum is not None else completion_tolerance(nu2, len(st.found))
    total = math.fsum(st.found.values())
    status = COMPLETE if abs(total - 1.0) <= tau else INCOMPLETE
    resid = 0.0
    for c, j in unresolved:
        rpos = design.groups[c].offsets.positions("random")
        rows = rpos if rpos.size else np.arange(design.P)
        resid += float(np.mean(U[c, rows, j] ** 2))
    diag = {
        "duplicates": st.duplicates,
        "flagged_duplicates": st.flagged_duplicates,
        "hash_rejections": st.hash_rejects,
        "max_T": t_max,
        "T_breaches": t_breaches,
        "sum_estimates": total,
        "tau_sum": tau,
        "nominal_queries": design.C * design.P * design.B,
    }
    return RecoveryResult(design.n, st.found, status, used, len(unresolved), resid,
                          bins.queries, st.rounds, diag, _config_echo(cfg, code))


def _config_echo(cfg: PeelConfig, code: OffsetCodeSpec | None) -> dict:
    d = asdict(cfg)
    if code is not None:
        d["code"] = {"scheme": code.scheme, "r": code.r}
    return d


def _readout_for(g: GroupDesign):
    """Index read-out for one group's basis offsets.

    Each bit <e_i, m> comes from the sign flip at offset e_i when that offset was
    measured.  Otherwise, if e_i lies in the queried subspace (e_i = M' l), the
    bit is fixed by the bin index as j^T K l.  Returns None when some bit is
    unobtainable.
    """
    n, b = g.n, g.b
    zero, pos = g.offsets.basis_positions
    if zero < 0:
        return None
    sign_bits, sign_pos, hash_bits, hash_masks = [], [], [], []
    for i in range(2 * n):
        if pos[i] >= 0:
            sign_bits.append(i)
            sign_pos.append(int(pos[i]))
            continue
        l = g.in_coset_span(1 << i)
        if l is None:
            return None
        hash_bits.append(i)
        hash_masks.append(bin_form_apply(l, b))
    sign_pos_arr = np.array(sign_pos, dtype=np.intp)
    sign_weights = np.array([1 << i for i in sign_bits], dtype=np.uint64)
    hash_weights = np.array([1 << i for i in hash_bits], dtype=np.uint64)
    hash_masks_arr = np.array(hash_masks, dtype=np.int64)

    def readout(u: np.ndarray, j) -> tuple[np.ndarray, np.ndarray]:
        """Labels for the columns of a (P, K) block with bin indices j."""
        flips = (u[sign_pos_arr] < 0) ^ (u[zero] < 0)
        y = (flips.astype(np.uint64) * sign_weights[:, None]).sum(axis=0, dtype=np.uint64)
        if hash_bits:
            par = np.bitwise_count(np.asarray(j, dtype=np.int64)[None, :] & hash_masks_arr[:, None]) & 1
            y |= (par.astype(np.uint64) * hash_weights[:, None]).sum(axis=0, dtype=np.uint64)
        return swap_halves_array(y, n), np.ones(u.shape[1], dtype=bool)

    return readout


def noisy_peel(bins: BinTensor, design: SubsamplingDesign, cfg: PeelConfig | None = None) -> RecoveryResult:
    """Relaxation-schedule peeling for designs with zero and unit offsets.

    Each round scans every bin.  A bin whose mean square over all offsets is at
    most the zero threshold is skipped.  Otherwise, if every offset magnitude is
    within the relative band of the mean magnitude, the bin is read as a
    single-ton: index from sign flips, value as the sign-corrected mean.  A
    round that adds nothing relaxes both tests; the run stops once the
    estimates sum to one within tolerance or the schedule is exhausted.
    """
    cfg = cfg or PeelConfig()
    st = _Peeler(bins, design)
    U = st.bins.U
    nu2 = st.bins.nu2
    readouts = []
    for g in design.groups:
        ro = _readout_for(g)
        if ro is None:
            raise ValueError("design lacks the offsets needed for index read-out")
        readouts.append(ro)
    zero_thr = cfg.zero_sens * max(nu2, NOISE_FLOOR2)
    band = cfg.band
    relaxed = 0
    rnd = 0
    status = INCOMPLETE
    max_rounds = cfg.max_iter or 10 * (cfg.relaxations + 1) + default_iterations(cfg.sparsity_hint or design.B)
    done = False
    tau = cfg.tau_sum
    while not done and rnd < max_rounds:
        rnd += 1
        new = 0
        for c, g in enumerate(design.groups):
            Uc = U[c]
            energy = np.einsum("tj,tj->j", Uc, Uc) / Uc.shape[0]
            cand = np.flatnonzero(energy > zero_thr)
            if cand.size == 0:
                continue
            mags = np.abs(Uc[:, cand])
            mbar = mags.mean(axis=0)
            ok = np.all(np.abs(mags - mbar) <= band * mbar, axis=0) & (mbar > 0)
            js = cand[ok]
            if js.size == 0:
                continue
            block = Uc[:, js]
            labels, _ = readouts[c](block, js)
            keep = np.ones(js.size, dtype=bool)
            if cfg.hash_check:
                keep = g.hash(labels) == js
                st.hash_rejects += int((~keep).sum())
            signs = 1.0 - 2.0 * symplectic_array(g.offsets.labels[:, None], labels[None, :], design.n)
            rates = np.mean(signs * block, axis=0)
            for j, m, p in zip(js[keep].tolist(), labels[keep].tolist(), rates[keep].tolist()):
                if not p > 0 or not st.record(m, p, rnd):
                    continue
                new += 1
                st.peel_back(m, p, c)
                t = tau if tau is not None else completion_tolerance(nu2, len(st.found))
                if abs(math.fsum(st.found.values()) - 1.0) <= t:
                    status = COMPLETE
                    done = True
                    break
            if done:
                break
        if done:
            break
        if new == 0:
            if relaxed >= cfg.relaxations:
                break
            relaxed += 1
            zero_thr /= cfg.zero_step
            band += cfg.band_step
    # unresolved: bins still above the final zero threshold
    energy = np.einsum("ctj,ctj->cj", U, U) / U.shape[1]
    left = energy > zero_thr
    total = math.fsum(st.found.values())
    diag = {
        "duplicates": st.duplicates,
        "flagged_duplicates": st.flagged_duplicates,
        "hash_rejections": st.hash_rejects,
        "relaxations": relaxed,
        "final_zero_threshold": zero_thr,
        "final_band": band,
        "sum_estimates": total,
        "tau_sum": tau if tau is not None else completion_tolerance(nu2, len(st.found)),
        "nominal_queries": design.C * design.P * design.B,
    }
    return RecoveryResult(design.n, st.found, status, rnd, int(left.sum()), float(energy[left].sum()),
                          bins.queries, st.rounds, diag, _config_echo(cfg, None))
