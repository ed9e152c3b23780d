"""Figures for recovery reports and noise sweeps.

matplotlib is imported on first use with the Agg backend, so the library and
the CSV outputs work without a display.
"""

from __future__ import annotations

import json
from typing import Mapping, Sequence


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path, run_config: Mapping | None) -> None:
    meta = {"Software": None}
    if run_config is not None:
        meta["Description"] = json.dumps(run_config, sort_keys=True)
    fig.savefig(path, dpi=120, metadata=meta)


def plot_recovery(rows: Sequence[Mapping], path, floor: float | None = None,
                  title: str = "", run_config: Mapping | None = None) -> None:
    """Log-log scatter of estimated against true rates.

    ``rows`` carry ``true_rate`` and ``estimated_rate``.  Labels with a zero on
    either side are drawn on the axis floor so misses and false hits stay visible.
    """
    plt = _pyplot()
    true = [float(r["true_rate"]) for r in rows]
    est = [float(r["estimated_rate"]) for r in rows]
    positive = [v for v in true + est if v > 0]
    lo = min(positive) / 3 if positive else 1e-12
    if floor is not None:
        lo = min(lo, floor / 3)
    x = [v if v > 0 else lo for v in true]
    y = [v if v > 0 else lo for v in est]
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.loglog(x, y, ".", ms=4, alpha=0.7)
    hi = max(x + y + [lo * 10])
    ax.plot([lo, hi], [lo, hi], "k--", lw=0.8)
    if floor is not None:
        ax.axvline(floor, color="0.6", lw=0.8)
        ax.axhline(floor, color="0.6", lw=0.8)
    ax.set_xlabel("true rate")
    ax.set_ylabel("estimated rate")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path, run_config)
    plt.close(fig)


def plot_sweep_scatter(rows: Sequence[Mapping], path, run_config: Mapping | None = None) -> None:
    """Estimated against true rates for every trial, one colour per noise level."""
    plt = _pyplot()
    by_xi: dict[float, list[Mapping]] = {}
    for r in rows:
        by_xi.setdefault(float(r["xi"]), []).append(r)
    positive = [float(r[k]) for r in rows for k in ("true_rate", "estimated_rate") if float(r[k]) > 0]
    lo = min(positive) / 3 if positive else 1e-12
    fig, ax = plt.subplots(figsize=(5, 5))
    for xi in sorted(by_xi, reverse=True):
        pts = by_xi[xi]
        x = [max(float(r["true_rate"]), lo) for r in pts]
        y = [max(float(r["estimated_rate"]), lo) for r in pts]
        ax.loglog(x, y, ".", ms=3, alpha=0.5, label=f"xi={xi:g}")
    hi = max(positive) * 3 if positive else 1.0
    ax.plot([lo, hi], [lo, hi], "k--", lw=0.8)
    ax.set_xlabel("true rate")
    ax.set_ylabel("estimated rate")
    ax.legend(loc="upper left")
    fig.tight_layout()
    _save(fig, path, run_config)
    plt.close(fig)


def plot_tv_distribution(tv_by_xi: Mapping[float, Sequence[float]], path,
                         run_config: Mapping | None = None) -> None:
    """Box plot of total-variation distances per noise level."""
    plt = _pyplot()
    xis = sorted(tv_by_xi, reverse=True)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.boxplot([list(tv_by_xi[x]) for x in xis])
    ax.set_xticks(range(1, len(xis) + 1), [f"{x:g}" for x in xis])
    if all(v > 0 for x in xis for v in tv_by_xi[x]):
        ax.set_yscale("log")
    ax.set_xlabel("xi")
    ax.set_ylabel("TV distance")
    fig.tight_layout()
    _save(fig, path, run_config)
    plt.close(fig)
