"""Plain numerical simulation of a witness, for plotting only.

Nothing here is validated: trajectories come from scipy's LSODA
integrator. The witness path is replayed with midpoint dwell times; after
the path ends the automaton keeps running, taking the first jump whose
guard becomes true (or any enabled jump once the invariant is violated).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .bmc import WitnessTrace
from .formula import And, Atom, Formula, Or, eval_float
from .model import CLOCK, HybridAutomaton, ModelError


BOUNDARY_TOL = 1e-9


class TraceMismatch(ModelError):
    pass


def margin(phi: Formula, env) -> float:
    """Signed distance proxy: >= 0 exactly when ``phi`` holds at ``env``."""
    if isinstance(phi, Atom):
        return eval_float(phi.term, env) + float(phi.slack)
    if isinstance(phi, And):
        return min((margin(a, env) for a in phi.args), default=math.inf)
    if isinstance(phi, Or):
        return max((margin(a, env) for a in phi.args), default=-math.inf)
    raise TypeError(f"cannot simulate {type(phi).__name__}")


@dataclass
class Piece:
    mode: int
    t0: float
    t1: float
    sol: object  # dense output callable, or a constant state vector


class Simulator:
    def __init__(self, ha: HybridAutomaton, params: dict[str, float], max_step: float = math.inf):
        self.ha = ha
        self.vars = ha.var_names
        self.env0 = dict(params)
        self.max_step = max_step
        self._rhs = {}
        for m in ha.modes:
            rhs = m.rhs
            self._rhs[m.id] = [ha.substitute_fixed(rhs[v]) if v in rhs else None for v in self.vars]

    def env(self, x, t_mode: float) -> dict:
        e = dict(self.env0)
        e.update(zip(self.vars, x))
        e[CLOCK] = t_mode
        return e

    def field(self, q: int):
        terms = self._rhs[q]

        def f(t, x):
            e = self.env(x, t)
            return [0.0 if tm is None else eval_float(tm, e) for tm in terms]

        return f

    def flow(self, q: int, x, dur: float, events=()):
        if dur <= 0:
            return None, np.asarray(x, dtype=float), dur, None
        sol = solve_ivp(self.field(q), (0.0, dur), x, method="LSODA", dense_output=True,
                        events=list(events) or None, rtol=1e-8, atol=1e-10, max_step=self.max_step)
        if sol.status == -1:
            raise RuntimeError(f"integration failed in mode {q}: {sol.message}")
        hit = None
        if events and sol.status == 1:
            for i, te in enumerate(sol.t_events):
                if len(te):
                    hit = i
                    break
        return sol.sol, sol.y[:, -1], sol.t[-1], hit

    def jump(self, q: int, dst: int | None, x, t_mode: float):
        """Apply the enabled jump to ``dst`` (any destination if None) with the largest guard margin."""
        e = self.env(x, t_mode)
        cands = [j for j in self.ha.jumps if j.src == q and (dst is None or j.dst == dst)]
        if not cands:
            raise TraceMismatch(f"no jump out of mode {q}" + (f" to {dst}" if dst is not None else ""))
        j = max(cands, key=lambda j: margin(self.ha.substitute_fixed(j.guard), e))
        reset = j.reset_map
        new = [eval_float(self.ha.substitute_fixed(reset[v]), e) if v in reset else e[v] for v in self.vars]
        return j.dst, new


def simulate(ha: HybridAutomaton, trace: WitnessTrace, duration: float, period: float | None = None,
             clock: str = "tau") -> list[Piece]:
    """Piecewise trajectory over [0, duration]."""
    check_trace(ha, trace)
    params = {p.name: float(p.lo) for p in ha.parameters if p.fixed}
    params.update({n: trace.params[n].mid() for n in trace.params.names})
    sim = Simulator(ha, params)
    if period is not None and clock not in ha.var_names:
        raise TraceMismatch(f"--period needs a state variable named {clock}")
    pieces: list[Piece] = []
    t = 0.0
    q = trace.path[0]
    x = [trace.pre[0][v].mid() for v in ha.var_names]

    def add(q, sol, t0, t1, xend):
        pieces.append(Piece(q, t0, t1, sol if sol is not None else np.asarray(xend)))

    # replay the witness path
    for i, qi in enumerate(trace.path):
        if t >= duration:
            break
        dw = min(trace.dwell[i].mid(), duration - t)
        sol, xend, used, _ = sim.flow(qi, x, dw)
        add(qi, sol, t, t + used, xend)
        t += used
        x = list(xend)
        q = qi
        if i + 1 < len(trace.path) and t < duration:
            q, x = sim.jump(qi, trace.path[i + 1], x, dw)
    # free run with guard-triggered jumps and optional periodic clock restarts
    next_restart = period * (math.floor(t / period) + 1) if period is not None else math.inf
    t_mode = 0.0
    jumps = 0
    while t < duration:
        out = [j for j in ha.jumps if j.src == q]
        e = sim.env(x, t_mode)
        # a state sitting on a shared boundary keeps its mode; round-off is not a violation
        if margin(ha.substitute_fixed(ha.mode(q).invariant), e) < -BOUNDARY_TOL and any(
                margin(ha.substitute_fixed(j.guard), e) >= 0 for j in out):
            q, x = sim.jump(q, None, x, t_mode)
            t_mode = 0.0
            jumps += 1
            if jumps > 100_000:
                raise RuntimeError("too many jumps; the run looks Zeno")
            continue
        events = []
        for j in out:
            def ev(s, y, g=ha.substitute_fixed(j.guard), t_mode=t_mode):
                return margin(g, sim.env(y, t_mode + s))

            ev.terminal = True
            ev.direction = 1
            events.append(ev)
        end = min(duration, next_restart)
        sol, xend, used, hit = sim.flow(q, x, end - t, events)
        add(q, sol, t, t + used, xend)
        t = t + used if hit is not None else end
        x = list(xend)
        if hit is not None:
            q, x = sim.jump(q, out[hit].dst, x, t_mode + used)
            t_mode = 0.0
            jumps += 1
            if jumps > 100_000:
                raise RuntimeError("too many jumps; the run looks Zeno")
        else:
            t_mode += used
            if t >= next_restart:
                x[ha.var_names.index(clock)] = 0.0
                next_restart += period
    return pieces


def check_trace(ha: HybridAutomaton, trace: WitnessTrace):
    ids = {m.id for m in ha.modes}
    for q in trace.path:
        if q not in ids:
            raise TraceMismatch(f"witness visits mode {q}, which the model lacks")
    for a, b in zip(trace.path, trace.path[1:]):
        if not ha.jumps_between(a, b):
            raise TraceMismatch(f"witness jumps {a} -> {b}, which the model lacks")
    if not trace.pre or set(trace.pre[0].names) != set(ha.var_names):
        raise TraceMismatch("witness state variables differ from the model's")
    free = {p.name for p in ha.free_params}
    if not set(trace.params.names) <= {p.name for p in ha.parameters}:
        raise TraceMismatch("witness names parameters the model lacks")
    missing = free - set(trace.params.names)
    if missing:
        raise TraceMismatch(f"witness lacks values for free parameters {sorted(missing)}")


def sample(ha: HybridAutomaton, pieces: list[Piece], duration: float, step: float):
    """Rows (t, mode, *state) at t = 0, step, 2 step, ... up to duration."""
    if not step > 0:
        raise ValueError("step must be positive")
    n = int(math.floor(duration / step + 1e-9))
    starts = [p.t0 for p in pieces]
    rows = []
    for i in range(n + 1):
        t = min(i * step, duration)
        # the last piece starting at or before t: after a jump instant, the new mode
        p = pieces[max(bisect_right(starts, t) - 1, 0)]
        s = min(max(t - p.t0, 0.0), p.t1 - p.t0)
        y = p.sol(s) if callable(p.sol) else p.sol
        rows.append((t, p.mode, *[float(v) for v in y]))
    return rows
