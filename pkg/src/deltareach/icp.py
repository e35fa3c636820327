"""Branch-and-prune delta-decision procedure.

``decide`` returns ``unsat`` only when every box of the search space has
been refuted by sound contraction. It returns ``delta-sat`` only with a
witness box of width at most the witness width on which the
delta-weakened formula interval-holds. Anything else ends in
``budget-exceeded``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .contractor import contract
from .formula import (
    CERTAIN_TRUE,
    And,
    Atom,
    Formula,
    Or,
    atom_truth,
    delta_weaken,
)
from .interval import Box, CannotSplit, Interval
from .ode import FlowConstraint, StepControl, _prune_lists, _ref_interval, flow_residual

UNSAT = "unsat"
DELTA_SAT = "delta-sat"
BUDGET = "budget-exceeded"


@dataclass(frozen=True)
class SolverConfig:
    delta: float = 1e-4
    witness_width: float | None = None  # defaults to delta / 10
    max_splits: int = 200_000
    time_limit: float | None = None  # seconds, wall clock; None = unlimited
    workers: int = 1
    prune_passes: int = 50
    prune_tol: float = 0.01
    step_target: float | None = None  # ODE per-step target; defaults to delta / 1000
    max_ode_steps: int = 500
    min_width_factor: float = 1e-3  # give up refining uncertified boxes below this
    split_first: tuple = ()  # variables bisected before all others while wider than the witness width
    prune_slack: float = 0.0  # prune the (prune_slack * delta)-weakening instead of the formula itself

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not 0.0 <= self.prune_slack < 1.0:
            raise ValueError("prune_slack must lie in [0, 1)")

    @property
    def wwidth(self) -> float:
        return self.witness_width if self.witness_width is not None else float(self.delta) / 10.0

    def ode_control(self) -> StepControl:
        target = self.step_target if self.step_target is not None else float(self.delta) / 1000.0
        return StepControl(target=target, max_steps=self.max_ode_steps)


@dataclass
class Stats:
    branches: int = 0
    prunes: int = 0
    refuted: int = 0
    max_depth: int = 0
    certify_calls: int = 0
    unresolved: int = 0
    seconds: float = 0.0

    def as_kv(self) -> str:
        return " ".join(f"{k}={v:.3f}" if isinstance(v, float) else f"{k}={v}" for k, v in self.__dict__.items())


@dataclass
class Verdict:
    status: str
    witness: Box | None = None
    stats: Stats = field(default_factory=Stats)

    @property
    def is_sat(self) -> bool:
        return self.status == DELTA_SAT

    @property
    def is_unsat(self) -> bool:
        return self.status == UNSAT


@dataclass
class ConstraintSystem:
    box: Box
    formula: Formula
    delta: float = 1e-4

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        missing = sorted(self.formula.free_vars() - set(self.box.names))
        if missing:
            raise ValueError(f"unbounded variables {missing}")


# -- contraction ------------------------------------------------------------------

def _flow_hook(node, dom) -> bool:
    if not isinstance(node, FlowConstraint):
        raise TypeError(f"no contractor for {type(node).__name__}")
    f = node.field
    X0 = [_ref_interval(node.x0[d], dom) for d in f.dims]
    XT = [_ref_interval(node.xt[d], dom) for d in f.dims]
    res = _prune_lists(node, X0, XT, dom[node.t])
    if res is None:
        return False
    X0, XT, t = res
    for refs, vals in ((node.x0, X0), (node.xt, XT)):
        for d, v in zip(f.dims, vals):
            r = refs[d]
            if isinstance(r, str):
                nv = dom[r].intersect(v)
                if nv.is_empty:
                    return False
                dom[r] = nv
    nt = dom[node.t].intersect(t)
    if nt.is_empty:
        return False
    dom[node.t] = nt
    return True


def _prune_dom(dom: dict, phi: Formula, passes: int, tol: float) -> bool:
    for _ in range(passes):
        before = dict(dom)
        if not contract(phi, dom, _flow_hook):
            return False
        shrink = 0.0
        for k, old in before.items():
            new = dom[k]
            ow = old.width()
            if ow == new.width():
                continue
            if math.isinf(ow):
                shrink = 1.0
                break
            shrink = max(shrink, (ow - new.width()) / ow)
        if shrink < tol:
            break
    return True


def prune(box: Box, phi: Formula, passes: int = 50, tol: float = 0.01) -> Box | None:
    """Contract ``box`` by ``phi`` to a fixpoint. None means no solution."""
    dom = box.as_dict()
    if not _prune_dom(dom, phi, passes, tol):
        return None
    return Box(dom)


# -- certification ----------------------------------------------------------------

def _holds(phi: Formula, dom: Mapping[str, Interval], delta: float) -> bool:
    if isinstance(phi, Atom):
        return atom_truth(phi, dom) == CERTAIN_TRUE
    if isinstance(phi, And):
        return all(_holds(a, dom, delta) for a in phi.args)
    if isinstance(phi, Or):
        return any(_holds(a, dom, delta) for a in phi.args)
    if isinstance(phi, FlowConstraint):
        return flow_residual(phi, dom) <= delta
    raise TypeError(f"cannot certify {type(phi).__name__}")


def certify_witness(box: Box | Mapping[str, Interval], phi: Formula, delta) -> bool:
    """Whether the delta-weakening of ``phi`` interval-holds on ``box``."""
    d = Fraction(delta) if not isinstance(delta, Fraction) else delta
    if d < 0:
        raise ValueError("delta must be non-negative")
    weak = delta_weaken(phi, d)
    return _holds(weak, dict(box.items()), float(d))


# -- search -----------------------------------------------------------------------

def _with_control(phi: Formula, control: StepControl) -> Formula:
    if isinstance(phi, FlowConstraint):
        return phi.with_control(control)
    if isinstance(phi, And):
        return And(tuple(_with_control(a, control) for a in phi.args))
    if isinstance(phi, Or):
        return Or(tuple(_with_control(a, control) for a in phi.args))
    return phi


def _split(dom: dict, first=(), ww: float = 0.0) -> tuple[dict, dict]:
    policy = None
    cands = [(dom[n].width(), n) for n in first if n in dom and dom[n].width() > ww]
    if cands:
        best = max(w for w, _ in cands)
        pick = min(n for w, n in cands if w == best)
        policy = lambda box: pick  # noqa: E731
    lo_box, hi_box = Box(dom).bisect(policy)
    return lo_box.as_dict(), hi_box.as_dict()


def _width(dom: dict) -> float:
    return max((v.width() for v in dom.values()), default=0.0)


def decide(sys: ConstraintSystem, config: SolverConfig | None = None) -> Verdict:
    """Branch and prune over ``sys.box``."""
    cfg = config or SolverConfig(delta=sys.delta)
    if cfg.delta != sys.delta:
        cfg = SolverConfig(**{**cfg.__dict__, "delta": sys.delta})
    phi = _with_control(sys.formula, cfg.ode_control())
    # refuting a weakening of phi refutes phi; the margin left below delta lets
    # boxes near a delta-sat boundary contract onto certifiable witnesses
    slack = Fraction(cfg.prune_slack).limit_denominator(10**6) * Fraction(sys.delta)
    phi_prune = delta_weaken(phi, slack) if slack else phi
    stats = Stats()
    start = time.perf_counter()
    ww = cfg.wwidth
    floor = ww * cfg.min_width_factor
    stack: list[tuple[dict, int]] = [(sys.box.as_dict(), 0)]
    budget_hit = False

    def process(item):
        dom, depth = item
        ok = _prune_dom(dom, phi_prune, cfg.prune_passes, cfg.prune_tol)
        return ok, dom, depth

    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        while stack:
            if cfg.time_limit is not None and time.perf_counter() - start > cfg.time_limit:
                budget_hit = True
                break
            wave = [stack.pop() for _ in range(min(cfg.workers, len(stack)))]
            results = list(pool.map(process, wave)) if pool else [process(w) for w in wave]
            children: list[tuple[dict, int]] = []
            for ok, dom, depth in results:
                stats.prunes += 1
                stats.max_depth = max(stats.max_depth, depth)
                if not ok:
                    stats.refuted += 1
                    continue
                w = _width(dom)
                if w <= ww:
                    stats.certify_calls += 1
                    if certify_witness(Box(dom), phi, Fraction(sys.delta)):
                        stats.seconds = time.perf_counter() - start
                        return Verdict(DELTA_SAT, Box(dom), stats)
                    if w <= floor:
                        stats.unresolved += 1
                        continue
                if stats.branches >= cfg.max_splits:
                    budget_hit = True
                    stack.clear()
                    break
                try:
                    lo, hi = _split(dom, cfg.split_first, ww)
                except CannotSplit:
                    stats.unresolved += 1
                    continue
                stats.branches += 1
                # lower half explored first: pushed last
                children.append((hi, depth + 1))
                children.append((lo, depth + 1))
            # keep depth-first order deterministic across waves
            stack.extend(children)
    finally:
        if pool:
            pool.shutdown()
    stats.seconds = time.perf_counter() - start
    if budget_hit or stats.unresolved:
        return Verdict(BUDGET, None, stats)
    return Verdict(UNSAT, None, stats)
