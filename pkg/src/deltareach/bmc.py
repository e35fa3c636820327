"""Bounded reachability: unroll an automaton along explicit mode paths.

For a path ``q_0 .. q_k`` the system ranges over ``v@i`` (state on entry
to step i), ``v@it`` (state at the end of the dwell), the dwell times
``t@i`` and the free parameters. Fixed parameters are inlined.
"""

from __future__ import annotations

import re
import time as _time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

from .formula import FALSE, TRUE, Const, Formula, Var, conj, disj, eq, free_vars, substitute
from .icp import BUDGET, DELTA_SAT, UNSAT, ConstraintSystem, SolverConfig, Stats, decide
from .interval import Box, Interval
from .model import CLOCK, HybridAutomaton, ModelError
from .ode import FlowConstraint, VectorField


class QueryError(ModelError):
    kind = "query"


@dataclass(frozen=True)
class ReachQuery:
    automaton: HybridAutomaton
    goal: tuple  # ((mode id, Formula), ...)
    k_max: int = 3
    M: float | Mapping[int, float] = 10.0
    delta: float = 1e-4

    def __post_init__(self):
        if self.k_max < 0:
            raise QueryError("k_max must be >= 0")
        ids = {m.id for m in self.automaton.modes}
        for q, _ in self.goal:
            if q not in ids:
                raise QueryError(f"goal names undeclared mode {q}")
        if not self.delta > 0:
            raise QueryError("delta must be positive")

    def dwell_bound(self, q: int) -> float:
        if isinstance(self.M, Mapping):
            return float(self.M.get(q, max(self.M.values())))
        return float(self.M)

    def goal_of(self, q: int) -> Formula:
        parts = [f for m, f in self.goal if m == q]
        return disj(*parts) if parts else FALSE


def mode_goal(q: int, phi: Formula = TRUE) -> tuple:
    return ((q, phi),)


def global_goal(ha: HybridAutomaton, phi: Formula) -> tuple:
    """The same goal region in every mode."""
    return tuple((m.id, phi) for m in ha.modes)


_GOAL = re.compile(r"^\s*mode\s*=\s*(\d+)\s*(?:(?:&&|\band\b)(.*))?$", re.S)


def parse_goal(text: str, ha: HybridAutomaton) -> tuple:
    """``"mode=4"``, ``"mode=7 && u >= 1.18"`` or a bare formula (all modes)."""
    from .parser import parse_formula

    m = _GOAL.match(text)
    if m:
        q = int(m.group(1))
        ha.mode(q)
        rest = m.group(2)
        phi = parse_formula(rest, ha) if rest and rest.strip() else TRUE
        return mode_goal(q, phi)
    return global_goal(ha, parse_formula(text, ha))


# -- paths --------------------------------------------------------------------------

def enumerate_paths(ha: HybridAutomaton, goal, k: int) -> Iterator[tuple[int, ...]]:
    """Jump-graph paths with k jumps from an init mode to a goal mode, lexicographic."""
    goal_modes = {q for q, f in goal if f != FALSE}
    succ = {m.id: ha.successors(m.id) for m in ha.modes}

    def walk(path):
        if len(path) == k + 1:
            if path[-1] in goal_modes:
                yield tuple(path)
            return
        for n in succ[path[-1]]:
            yield from walk(path + [n])

    for q0 in ha.init_modes():
        yield from walk([q0])


# -- encoding -----------------------------------------------------------------------

def pre(v: str, i: int) -> str:
    return f"{v}@{i}"


def post(v: str, i: int) -> str:
    return f"{v}@{i}t"


def dwell(i: int) -> str:
    return f"t@{i}"


def _at(phi, ha: HybridAutomaton, names: Mapping[str, str], clock) -> Formula:
    """Rename state variables and bind the mode clock in a term or formula."""
    m: dict = {v: Var(n) for v, n in names.items()}
    m[CLOCK] = clock
    return substitute(ha.substitute_fixed(phi), m)


def _uses_clock(*items) -> bool:
    return any(CLOCK in free_vars(x) for x in items)


def encode_step_system(ha: HybridAutomaton, path: Sequence[int], query: ReachQuery) -> ConstraintSystem:
    """Constraint system whose solutions are the runs along ``path`` that end in the goal."""
    for a, b in zip(path, path[1:]):
        if not ha.jumps_between(a, b):
            raise QueryError(f"no jump {a} -> {b}")
    vars_ = ha.var_names
    free = [p for p in ha.free_params]
    fixed_free = {p.name for p in free}
    k = len(path) - 1
    box: dict[str, Interval] = {p.name: p.bound for p in free}
    gbounds = {v.name: v.bound for v in ha.variables}
    parts: list[Formula] = []

    for i, q in enumerate(path):
        for v in ha.variables:
            box[pre(v.name, i)] = v.bound
            box[post(v.name, i)] = v.bound
        M = query.dwell_bound(q)
        box[dwell(i)] = Interval(0.0, M)
        names0 = {v: pre(v, i) for v in vars_}
        namest = {v: post(v, i) for v in vars_}
        tvar = Var(dwell(i))
        if i == 0:
            parts.append(_at(ha.init_of(q), ha, names0, Const(Fraction(0))))

        mode = ha.mode(q)
        rhs = {v: ha.substitute_fixed(t) for v, t in mode.flow}
        inv = ha.substitute_fixed(mode.invariant)
        bounds = dict(gbounds)
        x0: dict = dict(names0)
        xt: dict = dict(namest)
        if _uses_clock(*rhs.values(), inv):
            rhs[CLOCK] = Const(Fraction(1))
            x0[CLOCK] = Fraction(0)
            xt[CLOCK] = dwell(i)
            bounds[CLOCK] = Interval(0.0, M)
        used = set().union(*(free_vars(t) for t in rhs.values()))
        params = [p for p in sorted(fixed_free) if p in used]
        for p in params:
            x0[p] = p
            xt[p] = p
        field_ = VectorField(rhs, params)
        parts.append(FlowConstraint(q, field_, x0, xt, dwell(i), inv, bounds, Fraction(0)))
        if inv != TRUE:
            parts.append(_at(inv, ha, names0, Const(Fraction(0))))
            parts.append(_at(inv, ha, namest, tvar))

        if i < k:
            nxt = path[i + 1]
            options = []
            for j in ha.jumps_between(q, nxt):
                reset = j.reset_map
                eqs = [_at(j.guard, ha, namest, tvar)]
                for v in vars_:
                    target = _at(reset.get(v, Var(v)), ha, namest, tvar)
                    eqs.append(eq(Var(pre(v, i + 1)), target))
                options.append(conj(*eqs))
            parts.append(disj(*options))
        else:
            g = query.goal_of(q)
            if g == TRUE:
                box[dwell(i)] = Interval(0.0, 0.0)
            else:
                parts.append(_at(g, ha, namest, tvar))
    return ConstraintSystem(Box(box), conj(*parts), query.delta)


def degrees_of_freedom(ha: HybridAutomaton, k: int) -> tuple:
    """Free parameters, initial state and dwell times: the rest follows by contraction."""
    names = [p.name for p in ha.free_params]
    names += [pre(v, 0) for v in ha.var_names]
    names += [dwell(i) for i in range(k + 1)]
    return tuple(names)


def variable_count(ha: HybridAutomaton, k: int) -> int:
    """Unrolled variable count: (state dims + clock) x 2 x (k+1) + dwell times + free parameters."""
    return (len(ha.variables) + 1) * 2 * (k + 1) + (k + 1) + len(ha.free_params)


# -- witness traces -------------------------------------------------------------------

@dataclass
class WitnessTrace:
    path: tuple
    dwell: list  # [Interval]
    pre: list  # [Box]
    post: list  # [Box]
    params: Box

    @classmethod
    def from_box(cls, ha: HybridAutomaton, path, box: Box) -> WitnessTrace:
        vars_ = ha.var_names
        return cls(
            tuple(path),
            [box[dwell(i)] for i in range(len(path))],
            [Box({v: box[pre(v, i)] for v in vars_}) for i in range(len(path))],
            [Box({v: box[post(v, i)] for v in vars_}) for i in range(len(path))],
            Box({p.name: box[p.name] for p in ha.free_params}),
        )

    def to_text(self) -> str:
        def iv_(x: Interval) -> str:
            return f"[{x.lo!r}, {x.hi!r}]"

        lines = ["witness-trace 1", "path " + " ".join(str(q) for q in self.path)]
        for n in self.params.names:
            lines.append(f"param {n} {iv_(self.params[n])}")
        for i, q in enumerate(self.path):
            lines.append(f"step {i} mode {q} dwell {iv_(self.dwell[i])}")
            for n in self.pre[i].names:
                lines.append(f"  pre {n} {iv_(self.pre[i][n])}")
            for n in self.post[i].names:
                lines.append(f"  post {n} {iv_(self.post[i][n])}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> WitnessTrace:
        num = r"([-+0-9.eEinfa]+)"
        ivre = re.compile(r"\[\s*" + num + r"\s*,\s*" + num + r"\s*\]")
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != "witness-trace 1":
            raise ValueError("not a witness trace")
        path: tuple = ()
        params: dict = {}
        dw, pres, posts = [], [], []

        def interval(s: str) -> Interval:
            m = ivre.search(s)
            if not m:
                raise ValueError(f"bad interval in {s!r}")
            return Interval(float(m.group(1)), float(m.group(2)))

        for ln in lines[1:]:
            head, _, rest = ln.partition(" ")
            if head == "path":
                path = tuple(int(x) for x in rest.split())
            elif head == "param":
                name, _, r = rest.partition(" ")
                params[name] = interval(r)
            elif head == "step":
                dw.append(interval(rest))
                pres.append({})
                posts.append({})
            elif head in ("pre", "post"):
                if not pres:
                    raise ValueError("state line before any step")
                name, _, r = rest.partition(" ")
                (pres if head == "pre" else posts)[-1][name] = interval(r)
            else:
                raise ValueError(f"unexpected line {ln!r}")
        if len(dw) != len(path):
            raise ValueError("step count does not match path")
        return cls(path, dw, [Box(p) for p in pres], [Box(p) for p in posts], Box(params))


# -- driver ---------------------------------------------------------------------------

@dataclass
class ReachResult:
    status: str
    k: int | None = None
    path: tuple | None = None
    trace: WitnessTrace | None = None
    stats: Stats = field(default_factory=Stats)
    systems: int = 0
    seconds: float = 0.0
    var_count: int = 0

    @property
    def is_sat(self) -> bool:
        return self.status == DELTA_SAT


def _merge(total: Stats, s: Stats):
    for k, v in s.__dict__.items():
        if k == "max_depth":
            total.max_depth = max(total.max_depth, v)
        else:
            setattr(total, k, getattr(total, k) + v)


def check_reach(query: ReachQuery, config: SolverConfig | None = None) -> ReachResult:
    """First delta-sat over k = 0..k_max and all paths; unsat only if all are refuted."""
    cfg = config or SolverConfig(delta=query.delta)
    ha = query.automaton
    start = _time.perf_counter()
    total = Stats()
    budget = False
    systems = 0
    for k in range(query.k_max + 1):
        for path in enumerate_paths(ha, query.goal, k):
            sysk = encode_step_system(ha, path, query)
            systems += 1
            v = decide(sysk, replace(cfg, split_first=degrees_of_freedom(ha, k)))
            _merge(total, v.stats)
            if v.status == DELTA_SAT:
                return ReachResult(DELTA_SAT, k, path, WitnessTrace.from_box(ha, path, v.witness), total,
                                   systems, _time.perf_counter() - start, variable_count(ha, k))
            if v.status == BUDGET:
                budget = True
    status = BUDGET if budget else UNSAT
    return ReachResult(status, None, None, None, total, systems, _time.perf_counter() - start,
                       variable_count(ha, query.k_max))
