"""Recovery-quality metrics and error-bound checks."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

from .channel import SparsePauliChannel
from .pauli import DimensionError, label_to_string, weight
from .peeler import RecoveryResult


def _completed(rates: Mapping[int, float]) -> dict[int, float]:
    """Copy with the identity replaced by one minus the non-identity mass."""
    out = {k: v for k, v in rates.items() if k != 0}
    out[0] = 1.0 - math.fsum(out.values())
    return out


def tv_distance(p: Mapping[int, float], q: Mapping[int, float]) -> float:
    """Half the l1 distance, with each identity rate completed to make a distribution."""
    a, b = _completed(p), _completed(q)
    keys = set(a) | set(b)
    return 0.5 * math.fsum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)


def linf_error(p: Mapping[int, float], q: Mapping[int, float]) -> float:
    keys = set(p) | set(q)
    return max((abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys), default=0.0)


@dataclass
class RecoveryReport:
    n: int
    linf: float
    tv: float
    rel_errors: dict[int, float]
    false_positives: list[int]
    false_negatives: list[int]
    linf_bound: float | None
    tv_bound: float | None
    queries: int
    wall_time: float | None
    truth_support: int
    recovered_support: int
    rows: list[dict] = field(default_factory=list)

    @property
    def linf_ok(self) -> bool | None:
        return None if self.linf_bound is None else self.linf <= self.linf_bound

    @property
    def tv_ok(self) -> bool | None:
        return None if self.tv_bound is None else self.tv <= self.tv_bound

    def to_dict(self, include_wall_time: bool = True) -> dict:
        d = {
            "n": self.n,
            "linf": self.linf,
            "tv": self.tv,
            "linf_bound": self.linf_bound,
            "tv_bound": self.tv_bound,
            "linf_ok": self.linf_ok,
            "tv_ok": self.tv_ok,
            "truth_support": self.truth_support,
            "recovered_support": self.recovered_support,
            "false_positives": [label_to_string(k, self.n) for k in self.false_positives],
            "false_negatives": [label_to_string(k, self.n) for k in self.false_negatives],
            "queries": self.queries,
        }
        if include_wall_time:
            d["wall_time"] = self.wall_time
        return d

    def save_json(self, path, extra: dict | None = None, include_wall_time: bool = True) -> None:
        d = self.to_dict(include_wall_time)
        if extra:
            d.update(extra)
        Path(path).write_text(json.dumps(d, indent=1) + "\n")

    def save_csv(self, path) -> None:
        cols = ["pauli", "weight", "true_rate", "estimated_rate", "abs_error", "rel_error"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def compare(
    truth: SparsePauliChannel,
    rec: RecoveryResult,
    eps0: float | None = None,
    xi: float | None = None,
    B: int | None = None,
    wall_time: float | None = None,
) -> RecoveryReport:
    """Score a recovery against the true channel.

    False negatives only count truth entries at or above ``eps0``; false
    positives are recovered labels whose true rate is below ``eps0`` (absent
    labels have rate 0).  Bounds are 2 xi / sqrt(B) and s xi / sqrt(B).
    """
    if truth.n != rec.n:
        raise DimensionError(f"truth has {truth.n} qubits, recovery has {rec.n}")
    p, q = truth.rates, rec.estimates
    floor = eps0 if eps0 is not None else 0.0
    rel = {k: abs(q[k] - p[k]) / p[k] for k in p if k in q and p[k] > 0}
    fp = sorted(k for k in q if p.get(k, 0.0) < floor or k not in p)
    fn = sorted(k for k, v in p.items() if v >= floor and v > 0 and k not in q)
    lb = tb = None
    if xi is not None and B:
        lb = 2 * xi / math.sqrt(B)
        tb = truth.sparsity * xi / math.sqrt(B)
    rows = []
    for k in sorted(set(p) | set(q), key=lambda k: (-p.get(k, 0.0), label_to_string(k, truth.n))):
        tr, es = p.get(k, 0.0), q.get(k, 0.0)
        rows.append({
            "pauli": label_to_string(k, truth.n),
            "weight": weight(k, truth.n),
            "true_rate": tr,
            "estimated_rate": es,
            "abs_error": abs(es - tr),
            "rel_error": abs(es - tr) / tr if tr > 0 else float("inf"),
        })
    return RecoveryReport(
        n=truth.n,
        linf=linf_error(p, q),
        tv=tv_distance(p, q),
        rel_errors=rel,
        false_positives=fp,
        false_negatives=fn,
        linf_bound=lb,
        tv_bound=tb,
        queries=rec.queries,
        wall_time=wall_time,
        truth_support=truth.sparsity,
        recovered_support=len(q),
        rows=rows,
    )
