"""Command-line front end: channel generation, recovery, noise sweeps, designs.

Exit codes: 0 success, 2 recovery finished incomplete (outputs still written),
1 usage or IO error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channel import (
    DEFAULT_TAIL_PROFILE,
    SparsePauliChannel,
    load_channel,
    plant_paulis,
    random_plants,
    random_sparse_channel,
    save_channel,
    tail_counts,
    tail_profile_channel,
)
from .design import local_stabilizer_design, save_design, type2_design, type2_distinct_count
from .metrics import compare
from .peeler import COMPLETE, PeelConfig
from .pipeline import recover_heuristic, recover_provable

log = logging.getLogger("sparsepauli")

SEED_ENV = "SPARSEPAULI_SEED"
EXIT_OK, EXIT_ERROR, EXIT_INCOMPLETE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Parameters of one invocation; embedded in every artifact it writes."""

    command: str
    params: dict = field(default_factory=dict)
    version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _write_json(path: Path, d: dict) -> None:
    path.write_text(json.dumps(d, indent=1) + "\n")


def _write_csv(path: Path, cols: list[str], rows: list[dict], cfg: RunConfig) -> None:
    """Tidy CSV with the run configuration on a leading comment line."""
    with open(path, "w", newline="") as fh:
        fh.write("# run_config: " + json.dumps(cfg.to_dict(), sort_keys=True) + "\n")
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _parse_plant(text: str) -> tuple[str, float]:
    label, sep, rate = text.rpartition(":")
    if not sep or not label:
        raise UsageError(f"plant {text!r} must look like LABEL:RATE")
    try:
        return label, float(rate)
    except ValueError:
        raise UsageError(f"plant rate {rate!r} is not a number") from None


def _parse_xi_list(text: str) -> list[float]:
    items = [t for t in (s.strip() for s in text.split(",")) if t]
    if not items:
        raise UsageError("--xi-list needs at least one value")
    try:
        xis = [float(t) for t in items]
    except ValueError as exc:
        raise UsageError(f"bad --xi-list: {exc}") from None
    if any(x < 0 for x in xis):
        raise UsageError("noise levels must be non-negative")
    return xis


# ---------------------------------------------------------------- gen-channel


def cmd_gen_channel(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if args.s is None:
        p_id = 0.86 if args.p_id is None else args.p_id
        ch = tail_profile_channel(args.n, p_id, seed, DEFAULT_TAIL_PROFILE)
        source = "tail-profile"
    else:
        p_id = 0.9 if args.p_id is None else args.p_id
        ch = random_sparse_channel(args.n, args.s, args.eps0, p_id, seed)
        source = "sparse"
    plants = [_parse_plant(t) for t in args.plant]
    if args.plant_random:
        plants += random_plants(args.n, args.plant_random, seed + 1, exclude=set(ch.rates))
    ch = plant_paulis(ch, plants)
    cfg = RunConfig("gen-channel", {
        "n": args.n, "s": args.s, "eps0": args.eps0, "p_id": p_id, "source": source,
        "plant": list(args.plant), "plant_random": args.plant_random, "seed": seed,
    })
    save_channel(ch, args.out, {"run_config": cfg.to_dict()})
    print(f"wrote {args.out}: n={ch.n}, {ch.sparsity} rates, identity {ch.identity_rate:.6g}")
    for t, c in tail_counts(ch).items():
        print(f"  rates above {t:g}: {c}")
    return EXIT_OK


# ---------------------------------------------------------------- recover


def _recover_once(ch: SparsePauliChannel, mode: str, xi: float, b: int, C: int, P1: int, rep: int,
                  seed: int, design_type: int, eps0: float | None):
    if mode == "provable":
        cfg = PeelConfig(eps0=eps0, sparsity_hint=ch.sparsity)
        run = recover_provable(ch, xi, b, C, P1, rep, seed, cfg)
    else:
        run = recover_heuristic(ch, xi, C, seed, design_type, PeelConfig(sparsity_hint=ch.sparsity))
    report = compare(ch, run.result, eps0, xi, run.design.B, run.seconds)
    return run, report


def cmd_recover(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    ch = load_channel(args.channel)
    b = args.b if args.b is not None else ch.n
    if args.mode == "provable" and not 1 <= b <= 2 * ch.n:
        raise UsageError(f"--b must lie in [1, {2 * ch.n}]")
    if args.xi < 0:
        raise UsageError("--xi must be non-negative")
    cfg = RunConfig("recover", {
        "channel": str(args.channel), "mode": args.mode, "xi": args.xi, "b": b, "c": args.c,
        "p1": args.p1, "rep": args.rep, "type": args.type, "eps0": args.eps0, "seed": seed,
    })
    run, report = _recover_once(ch, args.mode, args.xi, b, args.c, args.p1, args.rep, seed,
                                args.type, args.eps0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    embed = {"run_config": cfg.to_dict()}
    run.result.save(out / "result.json", embed)
    report.save_json(out / "report.json", embed, include_wall_time=False)
    _write_csv(out / "report.csv", ["pauli", "weight", "true_rate", "estimated_rate", "abs_error", "rel_error"],
               report.rows, cfg)
    _write_json(out / "timing.json", {"wall_time": run.seconds})
    if not args.no_plot:
        from .plotting import plot_recovery

        plot_recovery(report.rows, out / "recovery.png", args.eps0,
                      f"{args.mode}, xi={args.xi:g}", cfg.to_dict())
    res = run.result
    print(f"status {res.status}: {len(res.estimates)} labels, linf {report.linf:.3e}, TV {report.tv:.3e}, "
          f"{res.queries} queries")
    if report.linf_bound is not None:
        print(f"  bounds: linf {report.linf_bound:.3e} ({'ok' if report.linf_ok else 'exceeded'}), "
              f"TV {report.tv_bound:.3e} ({'ok' if report.tv_ok else 'exceeded'})")
    return EXIT_OK if res.status == COMPLETE else EXIT_INCOMPLETE


# ---------------------------------------------------------------- sweep


def _trial_seed(seed: int, xi_index: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, xi_index, trial]).generate_state(1, dtype=np.uint64)[0] >> 1)


def _sweep_trial(task):
    ch, mode, xi, xi_index, trial, seed, b, C, P1, rep, design_type, eps0 = task
    run, report = _recover_once(ch, mode, xi, b, C, P1, rep, _trial_seed(seed, xi_index, trial),
                                design_type, eps0)
    rows = [
        {"xi": xi, "trial": trial, "pauli": r["pauli"], "true_rate": r["true_rate"],
         "estimated_rate": r["estimated_rate"]}
        for r in report.rows
    ]
    tv = {"xi": xi, "trial": trial, "tv": report.tv, "linf": report.linf, "status": run.result.status,
          "recovered": report.recovered_support}
    return xi_index, trial, rows, tv


def cmd_sweep(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    xis = _parse_xi_list(args.xi_list)
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    ch = load_channel(args.channel)
    b = args.b if args.b is not None else ch.n
    cfg = RunConfig("sweep", {
        "channel": str(args.channel), "mode": args.mode, "xi_list": xis, "trials": args.trials, "b": b,
        "c": args.c, "p1": args.p1, "rep": args.rep, "type": args.type, "eps0": args.eps0, "seed": seed,
    })
    tasks = [(ch, args.mode, xi, i, t, seed, b, args.c, args.p1, args.rep, args.type, args.eps0)
             for i, xi in enumerate(xis) for t in range(args.trials)]
    t0 = time.perf_counter()
    jobs = args.jobs or 1
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_trial, tasks))
    else:
        results = [_sweep_trial(t) for t in tasks]
    # results are keyed by (noise level, trial), so aggregation ignores scheduling
    results.sort(key=lambda r: (r[0], r[1]))
    rows = [row for r in results for row in r[2]]
    tvs = [r[3] for r in results]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "trials.csv", ["xi", "trial", "pauli", "true_rate", "estimated_rate"], rows, cfg)
    _write_csv(out / "tv.csv", ["xi", "trial", "tv", "linf", "status", "recovered"], tvs, cfg)
    _write_json(out / "run_config.json", cfg.to_dict())
    _write_json(out / "timing.json", {"wall_time": time.perf_counter() - t0})
    if not args.no_plot:
        from .plotting import plot_sweep_scatter, plot_tv_distribution

        plot_sweep_scatter(rows, out / "scatter.png", cfg.to_dict())
        by_xi: dict[float, list[float]] = {}
        for r in tvs:
            by_xi.setdefault(r["xi"], []).append(r["tv"])
        plot_tv_distribution(by_xi, out / "tv.png", cfg.to_dict())
    for xi in xis:
        vals = [r["tv"] for r in tvs if r["xi"] == xi]
        done = sum(r["status"] == COMPLETE for r in tvs if r["xi"] == xi)
        print(f"xi={xi:g}: median TV {float(np.median(vals)):.3e}, {done}/{len(vals)} complete")
    return EXIT_OK


# ---------------------------------------------------------------- design


def cmd_design(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if args.type == 2:
        if args.n % 2:
            raise UsageError("type 2 designs need an even number of qubits")
        exp = type2_design(args.n, seed)
        sub = exp.subsampling
    else:
        sub, exp = local_stabilizer_design(args.n, args.c, seed)
    cfg = RunConfig("design", {"n": args.n, "c": args.c, "type": args.type, "seed": seed})
    save_design(args.out, sub, exp, {"run_config": cfg.to_dict()})
    print(exp.count)
    if args.type == 2:
        print(f"note: {exp.count} counts every (pair group, other pair) setting; "
              f"{type2_distinct_count(args.n)} of them are distinct experiments")
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsepauli", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log decoder events")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-channel", help="write a synthetic sparse Pauli channel")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--s", type=int, help="sparsity including the identity; omit for the tail profile")
    g.add_argument("--eps0", type=float, default=1e-6, help="smallest non-identity rate")
    g.add_argument("--p-id", type=float, help="identity rate (0.9 sparse, 0.86 tail profile)")
    g.add_argument("--plant", action="append", default=[], metavar="LABEL:RATE")
    g.add_argument("--plant-random", type=int, default=0, metavar="K",
                   help="plant K random labels at rates N(0.005, 0.001)")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", type=Path, required=True)
    g.set_defaults(func=cmd_gen_channel)

    def recovery_flags(q):
        q.add_argument("--channel", type=Path, required=True)
        q.add_argument("--mode", choices=["provable", "heuristic"], default="provable")
        q.add_argument("--b", type=int, help="bins per group are 2^b (provable mode, default n)")
        q.add_argument("--c", type=int, default=2, help="subsampling groups")
        q.add_argument("--p1", type=int, default=16, help="random offsets (provable mode)")
        q.add_argument("--rep", type=int, default=9, help="repetition-code length (provable mode)")
        q.add_argument("--type", type=int, choices=[1, 2], default=1, help="local design (heuristic mode)")
        q.add_argument("--eps0", type=float, help="declared smallest rate")
        q.add_argument("--seed", type=int)
        q.add_argument("--no-plot", action="store_true")

    r = sub.add_parser("recover", help="recover a channel from simulated eigenvalue queries")
    recovery_flags(r)
    r.add_argument("--xi", type=float, default=1e-4)
    r.add_argument("--out", type=Path, required=True, help="output directory")
    r.set_defaults(func=cmd_recover)

    s = sub.add_parser("sweep", help="repeat recovery over noise levels and trials")
    recovery_flags(s)
    s.add_argument("--xi-list", required=True, help="comma-separated noise levels")
    s.add_argument("--trials", type=int, default=10)
    s.add_argument("--jobs", type=int, default=1, help="worker processes")
    s.add_argument("--out-dir", type=Path, required=True)
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("design", help="write a local-stabilizer experiment design")
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--c", type=int, default=2)
    d.add_argument("--type", type=int, choices=[1, 2], default=1)
    d.add_argument("--seed", type=int)
    d.add_argument("--out", type=Path, required=True)
    d.set_defaults(func=cmd_design)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
