"""Parameter synthesis on top of bounded reachability.

``binary_search_threshold`` bisects a single parameter range using the
reachability verdict as the oracle; ``sweep_boundary`` repeats that for a
list of values of a second parameter and fits a line through the results.

A delta-sat probe counts as reachable, so every threshold carries a
halo of about delta in the parameter's effect.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

from .bmc import ReachQuery, check_reach
from .icp import BUDGET, DELTA_SAT, SolverConfig, Stats
from .model import HybridAutomaton, ModelError

ABOVE = "reachable-above"
BELOW = "reachable-below"


class SynthesisError(ValueError):
    pass


class InsufficientData(SynthesisError):
    pass


class DegenerateFit(SynthesisError):
    pass


class SearchAborted(SynthesisError):
    """The solver ran out of budget; ``bracket`` is the interval reached so far."""

    def __init__(self, message: str, bracket: tuple[float, float], history: list):
        super().__init__(message)
        self.bracket = bracket
        self.history = history


@dataclass(frozen=True)
class ThresholdQuery:
    automaton: HybridAutomaton
    goal: tuple
    param: str
    v_min: float
    v_max: float
    delta: float = 1e-4
    eps: float | None = None  # search width; defaults to delta
    polarity: str = ABOVE
    k_max: int = 3
    M: float = 10.0
    config: SolverConfig | None = None
    check_monotone: bool = False

    def __post_init__(self):
        if self.polarity not in (ABOVE, BELOW):
            raise SynthesisError(f"unknown polarity {self.polarity!r}")
        if not self.v_min < self.v_max:
            raise SynthesisError("need v_min < v_max")
        if self.param not in self.automaton.param_names:
            raise ModelError(f"no parameter {self.param}")

    @property
    def width(self) -> float:
        return self.eps if self.eps is not None else self.delta


@dataclass
class Probe:
    lo: float
    hi: float
    value: float
    verdict: str


@dataclass
class ThresholdResult:
    threshold: float
    bracket: tuple[float, float]
    history: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    stats: Stats = field(default_factory=Stats)

    @property
    def calls(self) -> int:
        return len(self.history)

    def to_text(self, param: str = "p") -> str:
        lines = [f"threshold {param} = {self.threshold:.6g}",
                 f"bracket [{self.bracket[0]:.6g}, {self.bracket[1]:.6g}]"]
        for p in self.history:
            lines.append(f"  probe {p.value:.6g} in [{p.lo:.6g}, {p.hi:.6g}] -> {p.verdict}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        lines.append("stats " + self.stats.as_kv())
        return "\n".join(lines)


def _probe(q: ThresholdQuery, value: float) -> tuple[str, Stats]:
    ha = q.automaton.with_param(q.param, Fraction(value))
    rq = ReachQuery(ha, q.goal, q.k_max, q.M, q.delta)
    cfg = q.config or SolverConfig(delta=q.delta)
    r = check_reach(rq, cfg)
    return r.status, r.stats


def _add(total: Stats, s: Stats):
    for k, v in s.__dict__.items():
        setattr(total, k, max(total.max_depth, v) if k == "max_depth" else getattr(total, k) + v)


def _monotone_warnings(q: ThresholdQuery, total: Stats) -> list:
    """Three coarse probes; reachability must switch at most once in the stated direction."""
    pts = [q.v_min + (q.v_max - q.v_min) * f for f in (0.25, 0.5, 0.75)]
    reach = []
    for p in pts:
        status, st = _probe(q, p)
        _add(total, st)
        if status == BUDGET:
            return []
        reach.append(status == DELTA_SAT)
    seq = reach if q.polarity == ABOVE else reach[::-1]
    # allowed patterns: unreachable* reachable*
    if any(a and not b for a, b in zip(seq, seq[1:])):
        msg = f"reachability of {q.param} is not monotone over probes {pts}: {reach}"
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        return [msg]
    return []


def binary_search_threshold(q: ThresholdQuery) -> ThresholdResult:
    lo, hi = float(q.v_min), float(q.v_max)
    total = Stats()
    notes = _monotone_warnings(q, total) if q.check_monotone else []
    history: list[Probe] = []
    while hi - lo > q.width:
        mid = 0.5 * (lo + hi)
        status, st = _probe(q, mid)
        _add(total, st)
        history.append(Probe(lo, hi, mid, status))
        if status == BUDGET:
            raise SearchAborted(f"solver budget exceeded at {q.param}={mid:.6g}", (lo, hi), history)
        reachable = status == DELTA_SAT
        if reachable == (q.polarity == ABOVE):
            hi = mid
        else:
            lo = mid
    return ThresholdResult(0.5 * (lo + hi), (lo, hi), history, notes, total)


# -- two-parameter boundaries ------------------------------------------------------

def least_squares_line(points) -> tuple[float, float, float]:
    """Ordinary least squares: (slope, intercept, residual sum of squares)."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 2:
        raise InsufficientData("need at least two points")
    n = len(pts)
    mx = math.fsum(x for x, _ in pts) / n
    my = math.fsum(y for _, y in pts) / n
    sxx = math.fsum((x - mx) ** 2 for x, _ in pts)
    if sxx == 0.0:
        raise DegenerateFit("all x values are equal")
    sxy = math.fsum((x - mx) * (y - my) for x, y in pts)
    slope = sxy / sxx
    intercept = my - slope * mx
    rss = math.fsum((y - (slope * x + intercept)) ** 2 for x, y in pts)
    return slope, intercept, rss


@dataclass
class BoundaryFit:
    """Unreachable region ``a * p1 + p2 >= c`` (``<=`` when ``unreachable_when`` says so)."""

    a: float
    c: float
    samples: list  # [(p1, threshold for p2)]
    residual_sum: float
    residuals: list
    unreachable_when: str = ">="
    failed: list = field(default_factory=list)  # p1 values whose search aborted
    stats: Stats = field(default_factory=Stats)

    def to_text(self, p1: str = "p1", p2: str = "p2") -> str:
        lines = [f"boundary: unreachable when {self.a:.6g} * {p1} + {p2} {self.unreachable_when} {self.c:.6g}"]
        for (x, y), r in zip(self.samples, self.residuals):
            lines.append(f"  {p1} = {x:.6g}: threshold {p2} = {y:.6g} (residual {r:.3g})")
        for x in self.failed:
            lines.append(f"  {p1} = {x:.6g}: search aborted")
        lines.append(f"residual sum of squares {self.residual_sum:.3g}")
        lines.append("stats " + self.stats.as_kv())
        return "\n".join(lines)


def sweep_boundary(automaton: HybridAutomaton, goal, p1: str, samples, p2: str, p2_range,
                   delta: float = 1e-4, polarity: str = BELOW, eps: float | None = None,
                   k_max: int = 3, M: float = 10.0, config: SolverConfig | None = None,
                   workers: int = 1) -> BoundaryFit:
    """Threshold of ``p2`` for each sampled ``p1``, then a least-squares line.

    ``polarity`` refers to ``p2``: with ``reachable-below`` the unreachable
    region lies above the line.
    """
    samples = [float(s) for s in samples]
    if len(samples) < 2:
        raise InsufficientData("need at least two samples")
    lo, hi = p2_range

    def one(x):
        ha = automaton.with_param(p1, Fraction(x))
        q = ThresholdQuery(ha, goal, p2, lo, hi, delta, eps, polarity, k_max, M, config)
        try:
            return x, binary_search_threshold(q)
        except SearchAborted:
            return x, None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, samples))
    else:
        results = [one(x) for x in samples]
    total = Stats()
    pts, failed = [], []
    for x, r in results:
        if r is None:
            failed.append(x)
            continue
        _add(total, r.stats)
        pts.append((x, r.threshold))
    if len(pts) < 2:
        raise InsufficientData(f"only {len(pts)} sample(s) produced a threshold")
    slope, intercept, rss = least_squares_line(pts)
    residuals = [y - (slope * x + intercept) for x, y in pts]
    # p2 = slope * p1 + intercept  <=>  -slope * p1 + p2 = intercept
    return BoundaryFit(-slope, intercept, pts, rss, residuals,
                       ">=" if polarity == BELOW else "<=", failed, total)
