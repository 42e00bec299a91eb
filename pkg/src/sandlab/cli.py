"""Command-line front door: seeded experiment orchestration and file
output.  Exit codes: 0 success, 2 flag error, 3 budget exceeded,
4 statistical precondition unmet.

Every command writes its data files plus a flat JSON manifest holding
the command, the full parameter map, version and timestamps; `rerun`
replays a manifest and reproduces the data files byte for byte
(timestamps excepted, they live only in the manifest).
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, backend, onesided, percolation, schedulers, stats
from .lattice import HeightConfig, Window
from .measures import InvalidSpecError, Seed, parse_measure, sample
from .percolation import InsufficientSupportError
from .schedulers import BudgetExceededError, parse_scheduler

EXIT_OK = 0
EXIT_FLAGS = 2
EXIT_BUDGET = 3
EXIT_STATS = 4


class StatPreconditionError(Exception):
    pass


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return str(path)


def _parse_window(text, d):
    parts = text.split(",")
    if len(parts) != d:
        raise ValueError(f"window {text!r} has {len(parts)} axes, expected d={d}")
    lower, upper = [], []
    for part in parts:
        lo, _, hi = part.partition(":")
        lower.append(int(lo))
        upper.append(int(hi))
    return Window(tuple(lower), tuple(upper))


def _window_from_args(args):
    if getattr(args, "window", None):
        return _parse_window(args.window, args.d)
    if getattr(args, "radius", None) is not None:
        return Window.centered(args.radius, args.d)
    raise ValueError("either --window or --radius is required")


def _manifest(out_dir, command, args, outputs, started, finished):
    skip = {"out", "func"}
    entry = {
        "command": command,
        "version": __version__,
        "backend": backend.backend_name(),
        "started": started,
        "finished": finished,
        "outputs": [str(p) for p in outputs],
    }
    for key, value in sorted(vars(args).items()):
        if key in skip or callable(value):
            continue
        entry[key] = value
    path = Path(out_dir) / f"{command}_manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(entry, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _now():
    return datetime.now(timezone.utc).isoformat()


def _heights_rows(config):
    for site in config.window.sites():
        yield (*site, config.heights[config.window.index(site)])


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- commands


def cmd_stabilize(args):
    started = _now()
    out = _out_dir(args)
    window = _window_from_args(args)
    spec = parse_measure(args.measure, args.d)
    seed = Seed(args.seed)
    sched = parse_scheduler(args.scheduler, Seed(args.seed, 1))
    config = sample(spec, window, seed)
    outcome = schedulers.stabilize(config, sched, args.budget)

    axes = [f"x{i}" for i in range(args.d)]
    outputs = [
        _write_csv(out / "final_heights.csv", axes + ["height"], _heights_rows(outcome.final)),
        _write_csv(
            out / "topples.csv",
            axes + ["count"],
            (
                (*site, outcome.topples.counts[window.index(site)])
                for site in window.sites()
            ),
        ),
        _write_csv(
            out / "ledger.csv",
            axes + ["grains"],
            ((*site, count) for site, count in sorted(outcome.final.ledger.items())),
        ),
        _write_csv(
            out / "status.csv",
            ["status", "steps", "wave_count"],
            [(outcome.status, outcome.steps, outcome.wave_count if outcome.wave_count is not None else "")],
        ),
    ]
    _manifest(out, "stabilize", args, outputs, started, _now())
    if not outcome.stabilized:
        raise BudgetExceededError(f"budget {args.budget} exceeded after {outcome.steps} topplings")
    return EXIT_OK


def cmd_zeros(args):
    started = _now()
    out = _out_dir(args)
    spec = parse_measure(args.measure, 1)
    trace = onesided.run_one_sided(spec, args.nmax, Seed(args.seed))
    pgm, csv = onesided.raster_export(trace, out / "zeros.pgm", out / "zeros_events.csv")
    zs = _write_csv(
        out / "zeros_counts.csv",
        ["step", "z", "origin_topples"],
        zip(range(args.nmax + 1), trace.z, trace.origin_topples),
    )
    _manifest(out, "zeros", args, [pgm, csv, zs], started, _now())
    return EXIT_OK


def _tail_sizes(spec, radius, replicates, master_seed, budget, d):
    window = Window.centered(radius, d)
    origin = window.index((0,) * d)
    t_sizes = np.empty(replicates, dtype=np.int64)
    w_sizes = np.empty(replicates, dtype=np.int64)
    for rep in range(replicates):
        config = sample(spec, window, Seed(master_seed, rep))
        outcome = schedulers.fast_stabilize(config, budget)
        if not outcome.stabilized:
            raise BudgetExceededError(f"replicate {rep} exceeded budget {budget}")
        toppled = outcome.topples.counts > 0
        w_mask = toppled | (outcome.final.heights > 0)
        t_sizes[rep] = percolation.origin_cluster_size(toppled, origin)
        w_sizes[rep] = percolation.origin_cluster_size(w_mask, origin)
    return t_sizes, w_sizes


def cmd_tail(args):
    started = _now()
    out = _out_dir(args)
    spec = parse_measure(args.measure, args.d)
    thresholds = range(1, args.thresh_max + 1)
    outputs = []
    insufficient = []
    for radius in (args.radius, 2 * args.radius):
        t_sizes, w_sizes = _tail_sizes(
            spec, radius, args.replicates, args.seed, args.budget, args.d
        )
        for name, sizes in (("T", t_sizes), ("W", w_sizes)):
            tail = percolation.survival_tail(sizes, thresholds)
            outputs.append(
                _write_csv(
                    out / f"tail_{name}_r{radius}.csv",
                    ["n", "survival", "count"],
                    zip(tail.thresholds, tail.survival, tail.counts),
                )
            )
            in_range = (tail.thresholds >= args.fit_min) & (tail.thresholds <= args.fit_max)
            sub = percolation.TailEstimate(
                tail.thresholds[in_range],
                tail.survival[in_range],
                tail.counts[in_range],
                tail.replicates,
            )
            try:
                fit = percolation.fit_exponential(sub, args.min_count)
            except InsufficientSupportError as exc:
                insufficient.append(f"{name} at radius {radius}: {exc}")
                continue
            outputs.append(
                _write_csv(
                    out / f"fit_{name}_r{radius}.csv",
                    ["slope", "intercept", "r2", "n_min", "n_max"],
                    [(fit.slope, fit.intercept, fit.r_squared, *fit.fit_range)],
                )
            )
    _manifest(out, "tail", args, outputs, started, _now())
    if insufficient:
        raise StatPreconditionError("; ".join(insufficient))
    return EXIT_OK


def cmd_iid(args):
    started = _now()
    out = _out_dir(args)
    spec = parse_measure(args.measure, 1)
    if not spec.is_product:
        print(
            "warning: interval statistics are only meaningful for product measures",
            file=sys.stderr,
        )
    levels = [int(z) for z in args.levels.split(",")]
    deltas = {z: [] for z in levels}
    for rep in range(args.replicates):
        trace = onesided.run_one_sided(spec, args.nmax, Seed(args.seed, rep), want_topples=False)
        for z in levels:
            deltas[z].extend(int(v) for v in onesided.interval_stats(trace, z).deltas)
    outputs = [
        _write_csv(
            out / f"intervals_z{z}.csv",
            ["index", "delta"],
            enumerate(deltas[z]),
        )
        for z in levels
    ]
    short = [z for z in levels if len(deltas[z]) < args.min_intervals]

    rows = []
    for i, za in enumerate(levels):
        for zb in levels[i + 1 :]:
            if deltas[za] and deltas[zb]:
                ks = stats.ks_two_sample(deltas[za], deltas[zb], args.level)
                rows.append((f"z{za}-vs-z{zb}", ks.statistic, ks.n_a, ks.n_b, ks.p_value, ks.reject))
    for z in levels:
        sample_z = deltas[z]
        half = len(sample_z) // 2
        if half >= 1:
            ks = stats.ks_two_sample(sample_z[:half], sample_z[half:], args.level)
            rows.append((f"z{z}-split-half", ks.statistic, ks.n_a, ks.n_b, ks.p_value, ks.reject))
    outputs.append(
        _write_csv(
            out / "ks.csv",
            ["comparison", "statistic", "n_a", "n_b", "p_value", "reject"],
            rows,
        )
    )
    _manifest(out, "iid", args, outputs, started, _now())
    if short:
        raise StatPreconditionError(
            f"fewer than {args.min_intervals} completed intervals for z in {short}"
        )
    return EXIT_OK


def cmd_clt(args):
    started = _now()
    out = _out_dir(args)
    spec = parse_measure(args.measure, 1)
    values = [
        stats.clt_statistic(spec, args.n, Seed(args.seed, rep)) for rep in range(args.replicates)
    ]
    arr = np.array(values)
    outputs = [
        _write_csv(out / "clt_samples.csv", ["replicate", "s_n"], enumerate(values)),
        _write_csv(
            out / "clt_summary.csv",
            ["n", "replicates", "mean", "variance"],
            [(args.n, args.replicates, arr.mean(), arr.var(ddof=1))],
        ),
    ]
    _manifest(out, "clt", args, outputs, started, _now())
    return EXIT_OK


def cmd_density(args):
    started = _now()
    out = _out_dir(args)
    spec = parse_measure(args.measure, args.d)
    if spec.density >= args.d:
        print(
            f"warning: density {spec.density} is at or above the critical density "
            f"{args.d}; stabilization may exhaust the budget",
            file=sys.stderr,
        )
    window = Window.centered(args.radius, args.d)
    config = sample(spec, window, Seed(args.seed))
    sampled_total = config.total_grains()
    outcome = schedulers.fast_stabilize(config, args.budget)
    margin = max(1, int(args.margin_frac * args.radius))
    core = tuple(slice(margin, s - margin) for s in window.shape)
    interior = outcome.final.heights[core]
    interior_density = float(interior.mean())
    final_total = outcome.final.total_grains()
    outputs = [
        _write_csv(
            out / "density.csv",
            [
                "declared_density",
                "interior_density",
                "margin",
                "sampled_total",
                "final_total",
                "exported",
                "conserved",
                "status",
                "steps",
            ],
            [
                (
                    spec.density,
                    interior_density,
                    margin,
                    sampled_total,
                    final_total,
                    sum(outcome.final.ledger.values()),
                    sampled_total == final_total,
                    outcome.status,
                    outcome.steps,
                )
            ],
        )
    ]
    _manifest(out, "density", args, outputs, started, _now())
    if not outcome.stabilized:
        raise BudgetExceededError(f"budget {args.budget} exceeded")
    return EXIT_OK


def cmd_scan(args):
    started = _now()
    out = _out_dir(args)
    rhos = [float(r) for r in args.rhos.split(",")]
    radii = [int(r) for r in args.radii.split(",")]
    rows = []
    for rho in rhos:
        spec = parse_measure(f"poisson:{rho}", args.d) if rho > 0 else parse_measure("constant:0")
        per_radius = {k: [] for k in radii}
        exceeded = {k: 0 for k in radii}
        pair_frac = {k: [] for k in radii}
        for s in range(args.seeds):
            records = schedulers.run_nested(
                spec, radii, Seed(args.seed, s), args.budget, args.d
            )
            seen = {rec.radius: rec for rec in records}
            for k in radii:
                rec = seen.get(k)
                if rec is None or not rec.outcome.stabilized:
                    exceeded[k] += 1
                    continue
                per_radius[k].append(rec.origin_topples)
                if args.d == 1:
                    t = rec.outcome.topples.counts
                    pair_frac[k].append(float(np.mean((t[:-1] == 0) & (t[1:] == 0))))
                else:
                    pair_frac[k].append(
                        float(np.mean(rec.outcome.topples.counts == 0))
                    )
        for k in radii:
            vals = per_radius[k]
            rows.append(
                (
                    "EXPLORATORY",
                    rho,
                    k,
                    len(vals),
                    exceeded[k],
                    float(np.median(vals)) if vals else "",
                    float(np.median(pair_frac[k])) if pair_frac[k] else "",
                )
            )
    outputs = [
        _write_csv(
            out / "scan.csv",
            [
                "label",
                "rho",
                "radius",
                "completed_seeds",
                "budget_exceeded_seeds",
                "median_origin_topples",
                "median_never_toppled_pair_fraction",
            ],
            rows,
        )
    ]
    _manifest(out, "scan", args, outputs, started, _now())
    return EXIT_OK


def cmd_rerun(args):
    with open(args.manifest, "r", encoding="utf-8") as fh:
        entry = json.load(fh)
    command = entry["command"]
    argv = [command]
    skip = {"command", "version", "backend", "started", "finished", "outputs"}
    for key, value in entry.items():
        if key in skip or value is None or value == "":
            continue
        argv.extend([f"--{key.replace('_', '-')}", str(value)])
    argv.extend(["--out", str(args.out or Path(args.manifest).parent)])
    return main(argv)


# ------------------------------------------------------------------ parser


def _add_common(p, d=True, seed=True, budget=True, out=True, fmt=True):
    if d:
        p.add_argument("--d", type=int, default=1, help="lattice dimension")
    if seed:
        p.add_argument("--seed", type=int, default=0, help="master RNG seed")
    if budget:
        p.add_argument(
            "--budget", type=int, default=schedulers.DEFAULT_BUDGET,
            help="max elementary topplings per stabilization",
        )
    if out:
        p.add_argument("--out", default=".", help="output directory")
    if fmt:
        p.add_argument("--format", choices=["csv", "pgm", "json"], default="csv")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sandlab",
        description="Sandpile stabilization, zero dynamics and toppled-cluster percolation",
    )
    parser.add_argument("--version", action="version", version=f"sandlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stabilize", help="sample one configuration and stabilize it")
    p.add_argument("--measure", required=True)
    p.add_argument("--window", help="LO:HI[,LO:HI...] inclusive bounds per axis")
    p.add_argument("--radius", type=int, help="centered box radius (alternative to --window)")
    p.add_argument("--scheduler", default="parallel")
    _add_common(p)
    p.set_defaults(func=cmd_stabilize)

    p = sub.add_parser("zeros", help="one-sided zero dynamics raster and event log")
    p.add_argument("--measure", required=True)
    p.add_argument("--nmax", type=int, default=10000)
    _add_common(p, d=False, budget=False)
    p.set_defaults(func=cmd_zeros)

    p = sub.add_parser("tail", help="origin-cluster survival tails and exponential fits")
    p.add_argument("--measure", required=True)
    p.add_argument("--radius", type=int, required=True)
    p.add_argument("--replicates", type=int, default=10000)
    p.add_argument("--thresh-max", type=int, default=60)
    p.add_argument("--fit-min", type=int, default=5)
    p.add_argument("--fit-max", type=int, default=30)
    p.add_argument("--min-count", type=int, default=50)
    _add_common(p)
    p.set_defaults(func=cmd_tail)

    p = sub.add_parser("iid", help="interval statistics of the zero count")
    p.add_argument("--measure", required=True)
    p.add_argument("--nmax", type=int, default=200000)
    p.add_argument("--levels", default="1,2")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--min-intervals", type=int, default=50)
    p.add_argument("--level", type=float, default=0.01, help="KS rejection level")
    _add_common(p, d=False, budget=False)
    p.set_defaults(func=cmd_iid)

    p = sub.add_parser("clt", help="scaled centered-sum statistic")
    p.add_argument("--measure", required=True)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--replicates", type=int, default=1000)
    _add_common(p, d=False, budget=False)
    p.set_defaults(func=cmd_clt)

    p = sub.add_parser("density", help="density conservation check")
    p.add_argument("--measure", required=True)
    p.add_argument("--radius", type=int, required=True)
    p.add_argument("--margin-frac", type=float, default=0.05)
    _add_common(p)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("scan", help="exploratory growth-curve scan over densities")
    p.add_argument("--rhos", default="0.8,1.2")
    p.add_argument("--radii", default="500,1000")
    p.add_argument("--seeds", type=int, default=5)
    _add_common(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("rerun", help="replay a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_rerun)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BudgetExceededError as exc:
        print(f"sandlab: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (StatPreconditionError, InsufficientSupportError) as exc:
        print(f"sandlab: statistical precondition unmet: {exc}", file=sys.stderr)
        return EXIT_STATS
    except (InvalidSpecError, ValueError) as exc:
        print(f"sandlab: {exc}", file=sys.stderr)
        return EXIT_FLAGS


if __name__ == "__main__":
    sys.exit(main())
