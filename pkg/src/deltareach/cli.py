"""Command-line driver: ``check``, ``synth``, ``sweep``, ``trace`` and ``bench``.

Exit status: 0 delta-sat (or a finished synthesis/trace), 1 unsat,
2 solver budget exceeded, 3 usage, parse or validation error.
``bench`` exits 0 when every case matches and 1 otherwise.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
import time
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path

from .bmc import QueryError, ReachQuery, check_reach, parse_goal, variable_count
from .icp import BUDGET, DELTA_SAT, UNSAT, SolverConfig
from .model import ModelError, fmt_formula, validate
from .parser import load_model

EXIT_SAT, EXIT_UNSAT, EXIT_BUDGET, EXIT_ERROR = 0, 1, 2, 3
EXIT_OF = {DELTA_SAT: EXIT_SAT, UNSAT: EXIT_UNSAT, BUDGET: EXIT_BUDGET}
DELTA_ENV = "DELTAREACH_DELTA"


class UsageError(Exception):
    pass


@dataclass
class RunRecord:
    model: str
    query: str
    initial_state: str
    var_count: int
    verdict: str
    seconds: float


def g6(x) -> str:
    return f"{float(x):.6g}"


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_SET_RANGE = re.compile(rf"^\s*\[\s*({_NUM})\s*,\s*({_NUM})\s*\]\s*$")
_SET_COLON = re.compile(rf"^\s*({_NUM})\s*:\s*({_NUM})\s*$")
_SET_POINT = re.compile(rf"^\s*({_NUM})\s*$")


def parse_range(text: str) -> tuple[Fraction, Fraction]:
    """``[lo,hi]``, ``lo:hi`` or a single value."""
    for rx in (_SET_RANGE, _SET_COLON):
        m = rx.match(text)
        if m:
            lo, hi = Fraction(m.group(1)), Fraction(m.group(2))
            if lo > hi:
                raise UsageError(f"empty range {text!r}")
            return lo, hi
    m = _SET_POINT.match(text)
    if m:
        v = Fraction(m.group(1))
        return v, v
    raise UsageError(f"cannot read range {text!r}")


def parse_sets(items) -> dict[str, tuple[Fraction, Fraction]]:
    out = {}
    for item in items or ():
        name, eq, value = item.partition("=")
        if not eq or not name.strip():
            raise UsageError(f"--set expects name=value or name=[lo,hi], got {item!r}")
        out[name.strip()] = parse_range(value)
    return out


def default_delta() -> float:
    raw = os.environ.get(DELTA_ENV)
    if raw is None:
        return 1e-4
    try:
        d = float(raw)
    except ValueError:
        raise UsageError(f"{DELTA_ENV}={raw!r} is not a number") from None
    return d


def _load(args):
    path = Path(args.model)
    if not path.is_file():
        raise UsageError(f"{path}: file not found")
    ha = load_model(path)
    problems = validate(ha)
    if problems:
        raise ModelError("; ".join(str(p) for p in problems))
    sets = parse_sets(getattr(args, "set", None))
    return path, ha.with_overrides(sets), sets


def _config(args) -> SolverConfig:
    delta = args.delta if args.delta is not None else default_delta()
    if not delta > 0:
        raise UsageError("delta must be positive")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    return SolverConfig(delta=delta, workers=args.workers, time_limit=args.time_limit)


def _initial_text(ha, sets) -> str:
    parts = []
    for q, f in ha.initial:
        parts.append(f"mode {q}: {fmt_formula(f)}")
    for n, (lo, hi) in sets.items():
        if n in ha.param_names:
            parts.append(f"{n} = {g6(lo)}" if lo == hi else f"{n} in [{g6(lo)}, {g6(hi)}]")
    return "; ".join(parts)


# -- subcommands -------------------------------------------------------------------

def cmd_check(args) -> int:
    path, ha, sets = _load(args)
    cfg = _config(args)
    goal = parse_goal(args.goal, ha)
    q = ReachQuery(ha, goal, args.k, args.M, cfg.delta)
    r = check_reach(q, cfg)
    rec = RunRecord(str(path), f"check {args.goal} k<={args.k}", _initial_text(ha, sets),
                    variable_count(ha, r.k if r.k is not None else args.k), r.status, r.seconds)
    if r.status == DELTA_SAT:
        out = Path(args.witness) if args.witness else Path(path.stem + ".witness")
        out.write_text(r.trace.to_text())
    if args.json:
        print(json.dumps(asdict(rec)))
    else:
        print(r.status)
        if r.status == DELTA_SAT:
            print(f"path {' '.join(map(str, r.path))} (k = {r.k})")
            for i, (qi, dw) in enumerate(zip(r.trace.path, r.trace.dwell)):
                print(f"  step {i} mode {qi} dwell [{g6(dw.lo)}, {g6(dw.hi)}]")
            for n in r.trace.params.names:
                iv = r.trace.params[n]
                print(f"  param {n} [{g6(iv.lo)}, {g6(iv.hi)}]")
            print(f"witness written to {out}")
        print(f"vars {rec.var_count}  systems {r.systems}  time {g6(r.seconds)} s")
        print("stats " + r.stats.as_kv())
    return EXIT_OF[r.status]


def cmd_synth(args) -> int:
    from .synthesis import ABOVE, BELOW, SearchAborted, ThresholdQuery, binary_search_threshold

    path, ha, sets = _load(args)
    cfg = _config(args)
    if args.param not in ha.param_names:
        raise UsageError(f"unknown parameter {args.param}")
    lo, hi = parse_range(args.range)
    goal = parse_goal(args.goal, ha)
    pol = ABOVE if args.polarity == "above" else BELOW
    q = ThresholdQuery(ha, goal, args.param, float(lo), float(hi), cfg.delta, args.eps, pol,
                       args.k, args.M, cfg, args.check_monotone)
    start = time.perf_counter()
    try:
        res = binary_search_threshold(q)
    except SearchAborted as e:
        print(f"budget-exceeded: {e}")
        print(f"bracket [{g6(e.bracket[0])}, {g6(e.bracket[1])}]")
        for p in e.history:
            print(f"  probe {g6(p.value)} in [{g6(p.lo)}, {g6(p.hi)}] -> {p.verdict}")
        return EXIT_BUDGET
    if args.json:
        print(json.dumps({
            "model": str(path), "param": args.param, "threshold": res.threshold,
            "bracket": list(res.bracket), "polarity": pol, "calls": res.calls,
            "history": [asdict(p) for p in res.history], "warnings": res.warnings,
            "seconds": time.perf_counter() - start,
        }))
    else:
        print(res.to_text(args.param))
        side = "at or above" if pol == ABOVE else "at or below"
        print(f"goal reachable (delta-sat) for {args.param} {side} the threshold; "
              f"probe verdicts are delta-sat, so the threshold carries a halo of about delta")
    return EXIT_SAT


def cmd_sweep(args) -> int:
    from .synthesis import ABOVE, BELOW, sweep_boundary

    path, ha, sets = _load(args)
    cfg = _config(args)
    for p in (args.p1, args.p2):
        if p not in ha.param_names:
            raise UsageError(f"unknown parameter {p}")
    try:
        samples = [float(s) for s in args.samples.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad --samples {args.samples!r}") from None
    lo, hi = parse_range(args.range)
    goal = parse_goal(args.goal, ha)
    pol = ABOVE if args.polarity == "above" else BELOW
    fit = sweep_boundary(ha, goal, args.p1, samples, args.p2, (float(lo), float(hi)), cfg.delta,
                         pol, args.eps, args.k, args.M, cfg, args.sample_workers)
    if args.json:
        print(json.dumps({"model": str(path), "a": fit.a, "c": fit.c, "samples": fit.samples,
                          "residuals": fit.residuals, "residual_sum": fit.residual_sum,
                          "unreachable_when": fit.unreachable_when, "failed": fit.failed}))
    else:
        print(fit.to_text(args.p1, args.p2))
    return EXIT_SAT


def cmd_trace(args) -> int:
    from .bmc import WitnessTrace
    from .simulate import sample, simulate

    if not args.step > 0:
        raise UsageError("--step must be positive")
    if not args.duration >= 0:
        raise UsageError("--duration must be non-negative")
    if args.period is not None and not args.period > 0:
        raise UsageError("--period must be positive")
    path, ha, _ = _load(args)
    wpath = Path(args.witness)
    if not wpath.is_file():
        raise UsageError(f"{wpath}: file not found")
    try:
        trace = WitnessTrace.from_text(wpath.read_text())
    except ValueError as e:
        raise ModelError(f"{wpath}: {e}") from None
    pieces = simulate(ha, trace, args.duration, args.period, args.clock)
    rows = sample(ha, pieces, args.duration, args.step)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["t", "mode", *ha.var_names])
        for t, q, *xs in rows:
            w.writerow([repr(t), q, *[repr(x) for x in xs]])
    finally:
        if args.out:
            out.close()
    return EXIT_SAT


def cmd_bench(args) -> int:
    from .benchmarks import run_suite

    tag = None if args.tag == "all" else args.tag
    rep = run_suite(tag, args.manifest, args.jobs, args.case)
    print(rep.to_text())
    return 0 if rep.passed else 1


# -- argument parsing --------------------------------------------------------------

def _common(p: argparse.ArgumentParser, solver: bool = True):
    p.add_argument("model", help="model file")
    p.add_argument("--set", action="append", metavar="NAME=VALUE",
                   help="override a parameter range or an initial value: name=v, name=[lo,hi] or name=lo:hi")
    if solver:
        p.add_argument("--goal", required=True, help='"mode=4", "mode=7 && u >= 1.18" or a formula')
        p.add_argument("-k", type=int, default=3, help="maximum number of jumps (default 3)")
        p.add_argument("--M", type=float, default=10.0, help="dwell-time bound per mode (default 10)")
        p.add_argument("--delta", type=float, default=None,
                       help=f"solver precision (default ${DELTA_ENV} or 1e-4)")
        p.add_argument("--workers", type=int, default=1, help="solver worker threads (1 = deterministic)")
        p.add_argument("--time-limit", type=float, default=None, help="solver budget in seconds per system")
        p.add_argument("--json", action="store_true", help="emit one JSON object")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deltareach", description="delta-decision reachability for hybrid automata")
    sub = ap.add_subparsers(dest="cmd", required=True)

    c = sub.add_parser("check", help="bounded reachability of a goal")
    _common(c)
    c.add_argument("--witness", help="where to write the witness trace (default <model>.witness)")
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("synth", help="binary search for a parameter threshold")
    _common(s)
    s.add_argument("--param", required=True)
    s.add_argument("--range", required=True, help="lo:hi or [lo,hi]")
    s.add_argument("--eps", type=float, default=None, help="search width (default: delta)")
    s.add_argument("--polarity", choices=("above", "below"), default="above",
                   help="goal reachable above (default) or below the threshold")
    s.add_argument("--check-monotone", action="store_true", help="three coarse probes before searching")
    s.set_defaults(func=cmd_synth)

    w = sub.add_parser("sweep", help="threshold of p2 per sample of p1, then a fitted line")
    _common(w)
    w.add_argument("--p1", required=True)
    w.add_argument("--samples", required=True, help="comma-separated values of p1")
    w.add_argument("--p2", required=True)
    w.add_argument("--range", required=True, help="search range for p2")
    w.add_argument("--eps", type=float, default=None)
    w.add_argument("--polarity", choices=("above", "below"), default="below")
    w.add_argument("--sample-workers", type=int, default=1)
    w.set_defaults(func=cmd_sweep)

    t = sub.add_parser("trace", help="plain simulation of a witness as CSV (not an enclosure)")
    _common(t, solver=False)
    t.add_argument("witness", help="witness file written by check")
    t.add_argument("--duration", type=float, required=True)
    t.add_argument("--step", type=float, required=True, help="sampling step")
    t.add_argument("--period", type=float, default=None, help="restart the stimulus clock every PERIOD")
    t.add_argument("--clock", default="tau", help="state variable reset by --period (default tau)")
    t.add_argument("--out", help="CSV file (default stdout)")
    t.set_defaults(func=cmd_trace)

    b = sub.add_parser("bench", help="run the regression suite")
    b.add_argument("--tag", choices=("fast", "long", "all"), default="fast")
    b.add_argument("--manifest", help="suite manifest (default: the bundled one)")
    b.add_argument("--jobs", type=int, default=1, help="cases run in parallel")
    b.add_argument("--case", action="append", help="run only the named case (repeatable)")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_ERROR if e.code else 0
    try:
        return args.func(args)
    except (UsageError, ModelError, QueryError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
