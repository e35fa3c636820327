"""Validated integration of vector fields and the flow contractor.

Each step computes an a-priori box by Picard iteration, then a tight end
box with an interval Taylor polynomial at the box midpoint plus a
mean-value correction bounded through the Jacobian over the a-priori box.
When steps stall (stiff dynamics, step budget) the rest of the horizon is
covered by a positively invariant box checked face by face.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Sequence

from . import interval as iv
from .contractor import contract
from .formula import (
    TRUE,
    App,
    Const,
    Formula,
    FormulaError,
    Term,
    Var,
    delta_weaken,
    free_vars,
    truth,
    CERTAIN_FALSE,
    CERTAIN_TRUE,
    UNKNOWN,
)
from .interval import EMPTY, Box, Interval
from .symbolic import diff, is_smooth, mk, simplify

_ZERO = Interval(0.0, 0.0)
_ONE = Interval(1.0, 1.0)


class EnclosureEscape(ArithmeticError):
    """The solution set may leave the variable bounds."""


class StepUnderflow(ArithmeticError):
    """Step control cannot certify progress."""


class NotSmooth(FormulaError):
    pass


@dataclass(frozen=True)
class StepControl:
    target: float = 1e-4
    max_steps: int = 100_000
    order: int = 5
    h_min: float = 1e-12
    h_max: float = math.inf
    fallback: bool = True
    rel_target: float = 1e-3  # per-step error may also reach this fraction of the box width
    wrap_target: float | None = None  # also bound per-step growth from the Lipschitz spread


# -- compiled expression tapes ---------------------------------------------------

class _Tape:
    """Terms flattened into a node list with binary add/mul."""

    def __init__(self, outputs: Sequence[Term], dims: Sequence[str], static_dims: Sequence[str] = ()):
        self.dims = list(dims)
        self._index = {d: i for i, d in enumerate(self.dims)}
        self.nodes: list[tuple] = []
        self._memo: dict = {}
        self.outs = [self._add(t) for t in outputs]
        self.smooth = all(n[0] not in ("abs", "min", "max") for n in self.nodes)
        # nodes constant along the flow: higher Taylor coefficients vanish
        fixed = {self._index[d] for d in static_dims}
        self.static: list[bool] = []
        for node in self.nodes:
            if node[0] == "var":
                self.static.append(node[1] in fixed)
            elif node[0] == "const":
                self.static.append(True)
            else:
                self.static.append(all(self.static[j] for j in node[1:]))

    def _push(self, key, node) -> int:
        if key in self._memo:
            return self._memo[key]
        self.nodes.append(node)
        self._memo[key] = len(self.nodes) - 1
        return self._memo[key]

    def _add(self, t: Term) -> int:
        if t in self._memo:
            return self._memo[t]
        if isinstance(t, Var):
            if t.name not in self._index:
                raise FormulaError(f"variable {t.name} is not a dimension of the field")
            return self._push(t, ("var", self._index[t.name]))
        if isinstance(t, Const):
            return self._push(t, ("const", Interval.from_rational(t.value)))
        op, args = t.op, t.args
        if op in ("add", "mul"):
            idx = self._add(args[0])
            for a in args[1:]:
                j = self._add(a)
                idx = self._push((op, idx, j), (op, idx, j))
            self._memo[t] = idx
            return idx
        if op == "pow":
            base, e = args
            if isinstance(e, Const) and e.value.denominator == 1:
                n = int(e.value)
                b = self._add(base)
                if n == 0:
                    return self._push(t, ("const", _ONE))
                idx = self._ipow(b, abs(n))
                if n < 0:
                    one = self._push(Const(Fraction(1)), ("const", _ONE))
                    idx = self._push(("div", one, idx), ("div", one, idx))
                self._memo[t] = idx
                return idx
            return self._add(App("exp", (App("mul", (e, App("log", (base,)))),)))
        ids = tuple(self._add(a) for a in args)
        return self._push(t, (op,) + ids)

    def _ipow(self, b: int, n: int) -> int:
        if n == 1:
            return b
        half = self._ipow(b, n // 2)
        sq = self._push(("mul", half, half), ("mul", half, half))
        if n % 2:
            sq = self._push(("mul", sq, b), ("mul", sq, b))
        return sq

    def eval0(self, X: Sequence[Interval]) -> list[Interval]:
        v: list[Interval] = []
        for node in self.nodes:
            op = node[0]
            if op == "var":
                r = X[node[1]]
            elif op == "const":
                r = node[1]
            elif op == "add":
                r = v[node[1]] + v[node[2]]
            elif op == "mul":
                a, b = node[1], node[2]
                r = iv.isqr(v[a]) if a == b else v[a] * v[b]
            elif op == "sub":
                r = v[node[1]] - v[node[2]]
            elif op == "neg":
                r = -v[node[1]]
            elif op == "div":
                r = v[node[1]] / v[node[2]]
            else:
                r = _UNARY0[op](*(v[i] for i in node[1:]))
            v.append(r)
        return [v[i] for i in self.outs]

    def taylor(self, X: Sequence[Interval], order: int, rhs: Sequence[int]) -> list[list[Interval]]:
        """Taylor coefficients x[d][0..order] of the flow through X.

        ``rhs[d]`` is the output slot giving dx_d/dt.
        """
        if not self.smooth:
            raise NotSmooth("field uses a non-smooth function")
        n = len(X)
        xs = [[X[d]] for d in range(n)]
        nodes = self.nodes
        c: list[list[Interval]] = [[] for _ in nodes]
        aux: list[list[Interval] | None] = [None] * len(nodes)
        outs = [self.outs[r] for r in rhs]
        static = self.static
        for k in range(order):
            inv_k = 1.0 / k if k else 0.0
            for i, node in enumerate(nodes):
                op = node[0]
                if k and static[i]:
                    r = _ZERO
                elif op == "var":
                    r = xs[node[1]][k]
                elif op == "const":
                    r = node[1] if k == 0 else _ZERO
                elif op == "add":
                    r = c[node[1]][k] + c[node[2]][k]
                elif op == "sub":
                    r = c[node[1]][k] - c[node[2]][k]
                elif op == "neg":
                    r = -c[node[1]][k]
                elif op == "mul":
                    a, b = c[node[1]], c[node[2]]
                    if static[node[1]]:
                        r = a[0] * b[k]
                    elif static[node[2]]:
                        r = a[k] * b[0]
                    elif node[1] == node[2]:
                        r = _sqr_coef(a, k)
                    else:
                        r = a[0] * b[k]
                        for j in range(1, k + 1):
                            r = r + a[j] * b[k - j]
                elif op == "div":
                    a, b = c[node[1]], c[node[2]]
                    if static[node[2]]:
                        r = a[k] / b[0]
                    else:
                        s = a[k]
                        q = c[i]
                        for j in range(1, k + 1):
                            s = s - b[j] * q[k - j]
                        r = s / b[0]
                else:
                    a = c[node[1]]
                    r = _unary_coef(op, a, c[i], aux, i, k, inv_k)
                c[i].append(r)
            kp1 = float(k + 1)
            for d in range(n):
                xs[d].append(c[outs[d]][k] / kp1)
        return xs


def _sqr_coef(a, k):
    # coefficient k of a*a using symmetry
    r = _ZERO
    half = (k - 1) // 2
    for j in range(0, half + 1):
        r = r + a[j] * a[k - j]
    r = r * 2.0
    if k % 2 == 0:
        r = r + iv.isqr(a[k // 2])
    return r


def _conv_weighted(a, b, k, inv_k, lo=1):
    """(1/k) * sum_{j=lo..k} j a[j] b[k-j]"""
    s = _ZERO
    for j in range(lo, k + 1):
        s = s + (a[j] * float(j)) * b[k - j]
    return s * inv_k if k else s


def _unary_coef(op, a, me, aux, i, k, inv_k):
    if op == "exp":
        if k == 0:
            return iv.iexp(a[0])
        return _conv_weighted(a, me, k, inv_k)
    if op == "log":
        if k == 0:
            return iv.ilog(a[0])
        s = _ZERO
        for j in range(1, k):
            s = s + (me[j] * float(j)) * a[k - j]
        return (a[k] - s * inv_k) / a[0]
    if op in ("sin", "cos"):
        if k == 0:
            s0, c0 = iv.isin(a[0]), iv.icos(a[0])
            aux[i] = [c0 if op == "sin" else s0]
            return s0 if op == "sin" else c0
        other = aux[i]
        if op == "sin":
            s_k = _conv_weighted(a, other, k, inv_k)
            # cos coefficient needs sin up to k
            sin_series = me + [s_k]
            other.append(-_conv_weighted(a, sin_series, k, inv_k))
            return s_k
        cos_series = me
        sin_series = other
        c_k = -_conv_weighted(a, sin_series, k, inv_k)
        cos_next = cos_series + [c_k]
        sin_series.append(_conv_weighted(a, cos_next, k, inv_k))
        return c_k
    if op == "tanh":
        if k == 0:
            t0 = iv.itanh(a[0])
            aux[i] = [_ONE - iv.isqr(t0)]
            return t0
        d = aux[i]
        t_k = _conv_weighted(a, d, k, inv_k)
        ts = me + [t_k]
        d.append(-_sqr_coef(ts, k))
        return t_k
    if op == "sqrt":
        if k == 0:
            return iv.isqrt(a[0])
        s = a[k]
        for j in range(1, k):
            s = s - me[j] * me[k - j]
        return s / (me[0] * 2.0)
    raise NotSmooth(f"no Taylor rule for {op}")


_UNARY0 = {
    "exp": iv.iexp,
    "log": iv.ilog,
    "sin": iv.isin,
    "cos": iv.icos,
    "sqrt": iv.isqrt,
    "tanh": iv.itanh,
    "abs": iv.iabs,
    "min": iv.imin,
    "max": iv.imax,
}


# -- vector fields ----------------------------------------------------------------

class VectorField:
    """Autonomous field over named dimensions.

    ``rhs`` maps every evolving dimension to its derivative; ``params`` are
    extra dimensions with zero derivative.
    """

    def __init__(self, rhs: Mapping[str, Term], params: Sequence[str] = ()):
        self.rhs = {k: simplify(v) for k, v in rhs.items()}
        self.params = tuple(p for p in params if p not in self.rhs)
        self.dims = tuple(self.rhs) + self.params
        zero = Const(Fraction(0))
        terms = [self.rhs.get(d, zero) for d in self.dims]
        known = set(self.dims)
        for d, t in zip(self.dims, terms):
            extra = free_vars(t) - known
            if extra:
                raise FormulaError(f"derivative of {d} uses unbound {sorted(extra)}")
        self.terms = terms
        self.tape = _Tape(terms, self.dims, self.params)
        self._rhs_slots = list(range(len(self.dims)))
        self.const_rate = [t.value if isinstance(t, Const) else None for t in terms]
        self._jac = None
        self._rev = None
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return len(self.dims)

    def jacobian_tape(self) -> tuple[_Tape, list[tuple[int, int]]]:
        with self._lock:
            if self._jac is None:
                entries, terms = [], []
                for i, t in enumerate(self.terms):
                    if isinstance(t, Const):
                        continue
                    fv = free_vars(t)
                    for j, d in enumerate(self.dims):
                        if d in fv:
                            dt = diff(t, d)
                            if isinstance(dt, Const) and dt.value == 0:
                                continue
                            entries.append((i, j))
                            terms.append(dt)
                self._jac = (_Tape(terms, self.dims), entries)
            return self._jac

    def reversed(self) -> VectorField:
        with self._lock:
            if self._rev is None:
                self._rev = VectorField({k: mk("neg", v) for k, v in self.rhs.items()}, self.params)
            return self._rev

    def eval(self, X: Sequence[Interval]) -> list[Interval]:
        return self.tape.eval0(X)

    def taylor(self, X: Sequence[Interval], order: int) -> list[list[Interval]]:
        return self.tape.taylor(X, order, self._rhs_slots)

    def jacobian(self, X: Sequence[Interval]) -> list[list[Interval]]:
        tape, entries = self.jacobian_tape()
        n = self.n
        J = [[_ZERO] * n for _ in range(n)]
        if entries:
            vals = tape.eval0(X)
            for (i, j), v in zip(entries, vals):
                J[i][j] = v
        return J


# -- enclosures -------------------------------------------------------------------

@dataclass
class Segment:
    """Enclosure data for one time step ``[t0, t1]``."""

    t0: float
    t1: float
    box: list  # whole-step enclosure (contracted)
    end: list  # enclosure at t1 (contracted)
    kind: str = "taylor"
    start: list | None = None
    mid: list | None = None
    coeffs: list | None = None
    rem: list | None = None
    jy: list | None = None
    raw: list | None = None  # uncontracted a-priori box

    def at(self, a: float, b: float) -> list:
        """Enclosure over absolute times [a, b] within this step."""
        if self.kind != "taylor" or (a <= self.t0 and b >= self.t1):
            return self.box
        if a == b == self.t1:
            return self.end
        ta = max(0.0, iv.down(a - self.t0))
        tb = iv.up(b - self.t0)
        T = Interval(ta, tb)
        n = len(self.box)
        order = len(self.coeffs[0]) - 1
        Tp = [_ONE, T]
        for k in range(2, order + 2):
            Tp.append(iv.ipow(T, k))
        out = []
        dx = [self.start[d] - self.mid[d] for d in range(n)]
        for d in range(n):
            cs = self.coeffs[d]
            s = cs[0]
            for k in range(1, order + 1):
                s = s + Tp[k] * cs[k]
            s = s + Tp[order + 1] * self.rem[d]
            row = self.jy[d]
            corr = dx[d]
            for j in range(n):
                if row[j] is not None:
                    corr = corr + (T * row[j]) * dx[j]
            v = (s + corr).intersect(self.box[d])
            if v.is_empty:
                return None
            out.append(v)
        return out


@dataclass
class Enclosure:
    """Ordered step enclosures covering ``[0, horizon]``."""

    dims: tuple
    segments: list
    horizon: float
    requested: float
    complete: bool = True  # False when truncated by an invariant or emptiness

    @property
    def steps(self) -> list[tuple[Interval, Box]]:
        return [
            (Interval(s.t0, s.t1), Box(dict(zip(self.dims, s.box))))
            for s in self.segments
        ]

    def final(self) -> Box | None:
        if not self.segments or self.horizon < self.requested:
            return None
        return Box(dict(zip(self.dims, self.segments[-1].end)))

    def over(self, t: Interval) -> list | None:
        """Hull of the enclosure over the time interval ``t`` (None if empty)."""
        acc = None
        for s in self.segments:
            if s.t1 < t.lo or s.t0 > t.hi:
                continue
            part = s.at(max(t.lo, s.t0), min(t.hi, s.t1))
            if part is None:
                continue
            acc = part if acc is None else [x.hull(y) for x, y in zip(acc, part)]
        return acc


def _subset(a: Sequence[Interval], b: Sequence[Interval]) -> bool:
    return all(x.lo > y.lo or (x.lo == y.lo == -math.inf) for x, y in zip(a, b)) and all(
        x.hi < y.hi or (x.hi == y.hi == math.inf) for x, y in zip(a, b)
    )


class _Integrator:
    def __init__(self, field: VectorField, control: StepControl, bounds=None, invariant: Formula = TRUE):
        self.f = field
        self.ctl = control
        self.bounds = bounds  # list[Interval] or None
        self.inv = invariant if invariant is not None else TRUE
        self.inv_vars = free_vars(self.inv) if self.inv != TRUE else frozenset()
        self.clock_time = None

    # restriction to valid states: global bounds and the invariant
    def restrict(self, X: list, time: Interval | None = None) -> list | None:
        if self.bounds is not None:
            X = [x.intersect(b) for x, b in zip(X, self.bounds)]
            if any(x.is_empty for x in X):
                return None
        if self.inv_vars:
            dom = dict(zip(self.f.dims, X))
            if "time" in self.inv_vars and "time" not in dom:
                return X
            if not contract(self.inv, dom):
                return None
            X = [dom[d] for d in self.f.dims]
        return X

    def apriori(self, X, h: Interval):
        f = self.f
        H = Interval(0.0, h.hi)
        B = [x + H * fx for x, fx in zip(X, f.eval(X))]
        for attempt in range(6):
            B = [b.inflate(0.05 * b.width() + 1e-14 * (1.0 + b.mag())) if not math.isinf(b.width()) else b for b in B]
            try:
                fb = f.eval(B)
            except iv.DomainError:
                return None
            N = [x + H * v for x, v in zip(X, fb)]
            if any(math.isinf(v.width()) for v in N):
                return None
            if _subset(N, B):
                # one tightening pass
                try:
                    fb = f.eval(N)
                    N2 = [(x + H * v).intersect(b) for x, v, b in zip(X, fb, N)]
                except iv.DomainError:
                    return N
                return N2 if not any(v.is_empty for v in N2) else N
            B = [b.hull(nv) for b, nv in zip(B, N)]
        return None

    def taylor_step(self, X, t0: float, h: float):
        """Try one step of size h. Returns (segment, error ratio) or None; ratio <= 1 meets the target."""
        f, ctl = self.f, self.ctl
        n = f.n
        p = ctl.order
        t1 = t0 + h
        if t1 <= t0:
            return None
        hI = Interval(t1) - Interval(t0)
        hI = Interval(max(0.0, hI.lo), hI.hi)
        B = self.apriori(X, hI)
        if B is None:
            return None
        try:
            cb = f.taylor(B, p + 1)
        except iv.DomainError:
            return None
        rem = [cb[d][p + 1] for d in range(n)]
        hp = iv.ipow(hI, p + 1)
        # error measured against the per-dimension tolerance; <= 1 is acceptable
        err = 0.0
        for d in range(n):
            tol = max(ctl.target, ctl.rel_target * X[d].width())
            err = max(err, (hp * rem[d]).width() / tol)
        if not math.isfinite(err):
            return None
        m = [Interval(x.mid()) for x in X]
        try:
            cm = f.taylor(m, p)
            J = f.jacobian(B)
        except iv.DomainError:
            return None
        # |Y - I| <= rho entrywise with rho = exp(hL) - 1; rowmag bounds L
        rowmag = [iv.up(math.fsum(J[i][j].mag() for j in range(n))) for i in range(n)]
        L = max(rowmag, default=0.0)
        try:
            rho = iv.up(math.expm1(iv.up(hI.hi * L)))
        except OverflowError:
            return None
        if not math.isfinite(rho):
            return None
        # (Y - I)[k][j] vanishes unless k depends on j through a chain of nonzero J entries
        nz = [[not (J[i][j].lo == 0.0 and J[i][j].hi == 0.0) for j in range(n)] for i in range(n)]
        reach = [row[:] for row in nz]
        for k in range(n):
            for i in range(n):
                if reach[i][k]:
                    rk = reach[k]
                    ri = reach[i]
                    for j in range(n):
                        if rk[j]:
                            ri[j] = True
        mags = [[J[i][j].mag() for j in range(n)] for i in range(n)]
        spread = [[iv.up(rho * math.fsum(mags[i][k] for k in range(n) if nz[i][k] and reach[k][j]))
                   for j in range(n)] for i in range(n)]
        dx = [X[d] - m[d] for d in range(n)]
        if ctl.wrap_target is not None:
            for d in range(n):
                grow = math.fsum(spread[d][j] * dx[j].mag() for j in range(n))
                err = max(err, 2.0 * hI.hi * grow / ctl.wrap_target)
            if not math.isfinite(err):
                return None
        jy = []
        for i in range(n):
            row = []
            for j in range(n):
                v = J[i][j]
                if spread[i][j]:
                    v = v + Interval(-spread[i][j], spread[i][j])
                row.append(None if (v.lo == 0.0 and v.hi == 0.0) else v)
            jy.append(row)
        end = []
        for d in range(n):
            cs = cm[d]
            s = cs[p]
            for k in range(p - 1, -1, -1):
                s = s * hI + cs[k]
            s = s + hp * rem[d]
            corr = dx[d]
            for j in range(n):
                v = jy[d][j]
                if v is not None:
                    corr = corr + (hI * v) * dx[j]
            e = (s + corr).intersect(B[d])
            if e.is_empty:
                e = B[d]  # rounding corner: fall back to the a-priori box
            rate = f.const_rate[d]
            if rate is not None:
                exact = (X[d] + hI * Interval.from_rational(rate)).intersect(B[d])
                if not exact.is_empty:
                    e = exact
            end.append(e)
        seg = Segment(t0, t1, list(B), end, "taylor", list(X), m, cm, rem, jy, list(B))
        return seg, err

    def invariant_box(self, X, t0: float, T: float):
        """Positively invariant box for the remaining horizon [t0, T]."""
        f = self.f
        n = f.n
        span = Interval(0.0, iv.up(T - t0))
        bounds = self.bounds
        fixed = [f.const_rate[d] is not None for d in range(n)]
        B = []
        for d in range(n):
            if fixed[d]:
                B.append(X[d] + span * Interval.from_rational(f.const_rate[d]))
            else:
                B.append(X[d])

        def clip(d, v):
            if bounds is None:
                return v
            r = v.intersect(bounds[d])
            return r

        def face_ok(B, d, side):
            if bounds is not None:
                edge = bounds[d].lo if side == 0 else bounds[d].hi
                if (B[d].lo if side == 0 else B[d].hi) == edge:
                    return True, 0.0
            face = list(B)
            face[d] = Interval(B[d].lo) if side == 0 else Interval(B[d].hi)
            try:
                v = f.tape.eval0(face)[d]
            except iv.DomainError:
                return False, math.inf
            if side == 0:
                return v.lo >= 0.0, -v.lo
            return v.hi <= 0.0, v.hi

        for it in range(60):
            changed = False
            try:
                fb = f.tape.eval0(B)
            except iv.DomainError:
                fb = [Interval.entire()] * n
            for d in range(n):
                if fixed[d]:
                    continue
                for side in (0, 1):
                    ok, rate = face_ok(B, d, side)
                    if ok:
                        continue
                    grow = max(rate, abs(fb[d].lo if side == 0 else fb[d].hi), 0.0)
                    amt = grow * span.hi * (2.0 ** min(it, 30) / 4.0) + 1e-12 * (1.0 + B[d].mag()) + 0.01 * B[d].width()
                    if not math.isfinite(amt):
                        amt = math.inf
                    if side == 0:
                        nv = Interval(iv.down(B[d].lo - amt) if math.isfinite(amt) else -math.inf, B[d].hi)
                    else:
                        nv = Interval(B[d].lo, iv.up(B[d].hi + amt) if math.isfinite(amt) else math.inf)
                    nv = clip(d, nv)
                    if nv.is_empty or math.isinf(nv.width()):
                        return None
                    B[d] = nv
                    changed = True
            if not changed:
                break
        else:
            return None
        if any(math.isinf(b.width()) for b in B):
            return None
        # shrink faces back toward X while keeping the face condition
        for d in range(n):
            if fixed[d]:
                continue
            for side in (0, 1):
                lo_ok = B[d].lo if side == 0 else B[d].hi
                target = X[d].lo if side == 0 else X[d].hi
                if lo_ok == target:
                    continue
                good, probe = lo_ok, target
                for _ in range(40):
                    cand = 0.5 * (good + probe)
                    if cand == good or cand == probe:
                        break
                    trial = list(B)
                    trial[d] = Interval(cand, B[d].hi) if side == 0 else Interval(B[d].lo, cand)
                    ok, _ = face_ok(trial, d, side)
                    if ok:
                        good = cand
                    else:
                        probe = cand
                # the target face itself may already qualify
                trial = list(B)
                trial[d] = Interval(target, B[d].hi) if side == 0 else Interval(B[d].lo, target)
                if face_ok(trial, d, side)[0]:
                    good = target
                B[d] = Interval(good, B[d].hi) if side == 0 else Interval(B[d].lo, good)
        return B

    def run(self, X: list, T: float, time0: Interval | None = None) -> Enclosure:
        f, ctl = self.f, self.ctl
        segs: list[Segment] = []
        t = 0.0
        X = self.restrict(list(X), _ZERO)
        if X is None:
            return Enclosure(f.dims, [], 0.0, T, complete=False)
        if T <= 0.0:
            segs.append(Segment(0.0, 0.0, list(X), list(X), "point"))
            return Enclosure(f.dims, segs, 0.0, T)
        h = min(T, ctl.h_max, max(T / 8.0, 1e-6))
        steps = 0
        while t < T:
            remaining = T - t
            h = min(h, remaining, ctl.h_max)
            budget_left = ctl.max_steps - steps
            h_floor = ctl.h_min
            res = None
            if budget_left > 0 and h >= h_floor:
                for _ in range(40):
                    res = self.taylor_step(X, t, h)
                    if res is None:
                        h *= 0.5
                    else:
                        seg, err = res
                        if err > 1.0 and h > h_floor:
                            shrink = 0.9 * (1.0 / err) ** (1.0 / (ctl.order + 1))
                            h = max(h * min(shrink, 0.9), h_floor)
                            res = None
                        else:
                            break
                    if h < h_floor:
                        res = None
                        break
            if res is None:
                if not ctl.fallback:
                    raise StepUnderflow(f"no certified step at t={t}")
                B = self.invariant_box(X, t, T)
                if B is None:
                    raise EnclosureEscape(f"no enclosure beyond t={t}")
                time_span = Interval(t, T)
                Bc = self.restrict(B, time_span)
                if Bc is None:
                    return Enclosure(f.dims, segs, t, T, complete=False)
                segs.append(Segment(t, T, Bc, Bc, "box"))
                t = T
                break
            seg, err = res
            steps += 1
            box = self.restrict(seg.box, Interval(seg.t0, seg.t1))
            if box is None:
                # no valid trajectory survives into this step
                return Enclosure(f.dims, segs, t, T, complete=False)
            seg.box = box
            end = self.restrict(seg.end, Interval(seg.t1))
            if end is None:
                seg.end = [e.intersect(b) for e, b in zip(seg.end, box)]
                if any(e.is_empty for e in seg.end):
                    seg.end = box
                segs.append(seg)
                return Enclosure(f.dims, segs, seg.t1, T, complete=False)
            seg.end = end
            segs.append(seg)
            X = end
            t = seg.t1
            if err > 0:
                grow = 0.9 * (1.0 / err) ** (1.0 / (ctl.order + 1))
                h = (seg.t1 - seg.t0) * min(2.0, max(0.5, grow))
            else:
                h = (seg.t1 - seg.t0) * 2.0
        return Enclosure(f.dims, segs, t, T)


def integrate(field: VectorField, x0: Box, params: Box | None = None, horizon: float = 1.0,
              control: StepControl | None = None) -> Enclosure:
    """Validated enclosure of all solutions from ``x0`` over ``[0, horizon]``."""
    control = control or StepControl()
    env = dict(x0.items())
    if params is not None:
        env.update(params.items())
    missing = [d for d in field.dims if d not in env]
    if missing:
        raise iv.ShapeError(f"initial box lacks {missing}")
    X = [env[d] for d in field.dims]
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    enc = _Integrator(field, control).run(X, float(horizon))
    return enc


# -- flow constraints ---------------------------------------------------------------

Ref = "str | Fraction"


@dataclass(eq=False)
class FlowConstraint(Formula):
    """``xt`` is reached from ``x0`` by following ``field`` for time ``t``.

    ``x0``/``xt`` map field dimensions to system variable names or rational
    constants. ``invariant`` (over field dimensions, optionally ``time``)
    must hold along the whole flow; ``bounds`` are the global variable
    bounds, treated as an implicit invariant.
    """

    mode: object
    field: VectorField
    x0: dict
    xt: dict
    t: str
    invariant: Formula = TRUE
    bounds: dict | None = None
    delta: Fraction = Fraction(0)
    control: StepControl = StepControl()
    _cache: OrderedDict = field(default_factory=OrderedDict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def free_vars(self):
        names = {v for v in self.x0.values() if isinstance(v, str)}
        names |= {v for v in self.xt.values() if isinstance(v, str)}
        names.add(self.t)
        return frozenset(names)

    def weakened(self, d) -> FlowConstraint:
        return FlowConstraint(self.mode, self.field, self.x0, self.xt, self.t, self.invariant,
                              self.bounds, self.delta + d, self.control)

    def with_control(self, control: StepControl) -> FlowConstraint:
        fc = FlowConstraint(self.mode, self.field, self.x0, self.xt, self.t, self.invariant,
                            self.bounds, self.delta, control)
        return fc

    def __str__(self):
        return f"(flow {self.mode} {self.t})"

    def bound_list(self):
        if self.bounds is None:
            return None
        return [self.bounds.get(d, Interval.entire()) for d in self.field.dims]

    def enclosure(self, X: list, T: float, reverse: bool = False) -> Enclosure:
        key = (reverse, tuple((x.lo, x.hi) for x in X), T)
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit
        f = self.field.reversed() if reverse else self.field
        enc = _Integrator(f, self.control, self.bound_list(), self.invariant).run(list(X), T)
        with self._lock:
            self._cache[key] = enc
            if len(self._cache) > 256:
                self._cache.popitem(last=False)
        return enc


def _ref_interval(ref, box: Mapping[str, Interval]) -> Interval:
    if isinstance(ref, str):
        return box[ref]
    return Interval.from_rational(ref)


def _feasible_range(enc: Enclosure, t: Interval, target: list, depth: int = 10):
    """Tightest [lo, hi] of times in t where the enclosure meets target."""
    hits = []
    for s in enc.segments:
        a, b = max(t.lo, s.t0), min(t.hi, s.t1)
        if a > b:
            continue
        part = s.at(a, b)
        if part is None or any(p.intersect(q).is_empty for p, q in zip(part, target)):
            continue
        hits.append((s, a, b))
    if not hits:
        return None

    def meets(s, a, b):
        part = s.at(a, b)
        return part is not None and not any(p.intersect(q).is_empty for p, q in zip(part, target))

    # move each bound only past sub-intervals proven not to meet the target
    def leftmost(s, a, b):
        for _ in range(depth):
            if b - a <= 1e-15 * max(1.0, abs(b)):
                break
            m = 0.5 * (a + b)
            if meets(s, a, m):
                b = m
            else:
                a = m
        return a

    def rightmost(s, a, b):
        for _ in range(depth):
            if b - a <= 1e-15 * max(1.0, abs(b)):
                break
            m = 0.5 * (a + b)
            if meets(s, m, b):
                a = m
            else:
                b = m
        return b

    s, a, b = hits[0]
    lo = leftmost(s, a, b) if s.kind == "taylor" else a
    s, a, b = hits[-1]
    hi = rightmost(s, a, b) if s.kind == "taylor" else b
    if hi < lo:
        return None
    return lo, hi


def _hull_over(enc: Enclosure, lo: float, hi: float):
    return enc.over(Interval(lo, hi))


def prune_flow(fc: FlowConstraint, x0: Mapping[str, Interval], xt: Mapping[str, Interval],
               t: Interval, params: Mapping[str, Interval] | None = None):
    """Contract (x0, xt, t) by the flow. Returns None when no trajectory fits.

    ``x0``/``xt`` are boxes over the field's evolving dimensions; parameter
    dimensions come from ``params`` (shared by both ends).
    """
    f = fc.field
    params = params or {}
    X0 = [x0[d] if d in f.rhs else params[d] for d in f.dims]
    XT = [xt[d] if d in f.rhs else params[d] for d in f.dims]
    res = _prune_lists(fc, X0, XT, t)
    if res is None:
        return None
    X0, XT, t = res
    bx0 = Box({d: v for d, v in zip(f.dims, X0) if d in f.rhs})
    bxt = Box({d: v for d, v in zip(f.dims, XT) if d in f.rhs})
    return bx0, bxt, t


def _prune_lists(fc: FlowConstraint, X0: list, XT: list, t: Interval):
    t = t.intersect(Interval(0.0, math.inf))
    if t.is_empty:
        return None
    # parameters are shared between both ends
    f = fc.field
    for i, d in enumerate(f.dims):
        if d not in f.rhs:
            v = X0[i].intersect(XT[i])
            if v.is_empty:
                return None
            X0[i] = XT[i] = v
    if any(math.isinf(x.width()) for x in X0):
        return X0, XT, t
    try:
        enc = fc.enclosure(X0, t.hi)
    except (EnclosureEscape, StepUnderflow, NotSmooth):
        return X0, XT, t
    if enc.horizon < t.lo:
        return None
    t = t.intersect(Interval(0.0, enc.horizon))
    if t.is_empty:
        return None
    rng = _feasible_range(enc, t, XT)
    if rng is None:
        return None
    t = Interval(rng[0], rng[1])
    reach = enc.over(t)
    if reach is None:
        return None
    newXT = [a.intersect(b) for a, b in zip(XT, reach)]
    if any(v.is_empty for v in newXT):
        return None
    # backward pass only when the target actually constrains the end state
    constrained = any(
        n.width() < 0.9 * r.width() for n, r in zip(newXT, reach) if r.width() > 0.0
    )
    XT = newXT
    if constrained and not any(math.isinf(x.width()) for x in XT):
        try:
            benc = fc.enclosure(XT, t.hi, reverse=True)
        except (EnclosureEscape, StepUnderflow, NotSmooth):
            benc = None
        if benc is not None:
            if benc.horizon < t.lo:
                return None
            tb = t.intersect(Interval(0.0, benc.horizon))
            if tb.is_empty:
                return None
            rng = _feasible_range(benc, tb, X0)
            if rng is None:
                return None
            t = Interval(rng[0], rng[1])
            back = benc.over(t)
            if back is None:
                return None
            X0 = [a.intersect(b) for a, b in zip(X0, back)]
            if any(v.is_empty for v in X0):
                return None
    for i, d in enumerate(f.dims):
        if d not in f.rhs:
            v = X0[i].intersect(XT[i])
            if v.is_empty:
                return None
            X0[i] = XT[i] = v
    return X0, XT, t


def check_invariant_along(fc: FlowConstraint | Formula, enc: Enclosure, delta=0) -> str:
    """Classify an invariant over every step box of an enclosure."""
    inv = fc.invariant if isinstance(fc, FlowConstraint) else fc
    if delta:
        inv = delta_weaken(inv, delta)
    dims = enc.dims
    verdict = "certainly-holds"
    for s in enc.segments:
        env = dict(zip(dims, s.box))
        env.setdefault("time", Interval(s.t0, s.t1))
        r = truth(inv, env)
        if r == CERTAIN_FALSE:
            return "certainly-violated"
        if r == UNKNOWN:
            verdict = "unknown"
    return verdict


def flow_residual(fc: FlowConstraint, dom: Mapping[str, Interval]) -> float:
    """Width of hull(xt, enclosure of x0 over t); inf when not computable."""
    f = fc.field
    X0 = [_ref_interval(fc.x0[d], dom) for d in f.dims]
    XT = [_ref_interval(fc.xt[d], dom) for d in f.dims]
    t = dom[fc.t]
    if t.lo < 0.0:
        return math.inf
    ctl = replace(fc.control, wrap_target=fc.control.target * 10.0)
    try:
        enc = _Integrator(f, ctl, fc.bound_list(), TRUE).run(X0, t.hi)
    except (EnclosureEscape, StepUnderflow, NotSmooth):
        return math.inf
    reach = enc.over(t)
    if reach is None:
        return math.inf
    w = 0.0
    for a, b in zip(reach, XT):
        w = max(w, a.hull(b).width())
    # the weakened invariant must not be certainly violated along the flow
    if fc.invariant != TRUE:
        inv = delta_weaken(fc.invariant, fc.delta) if fc.delta else fc.invariant
        for s in enc.segments:
            if s.t0 > t.hi:
                break
            env = dict(zip(f.dims, s.box if s.t1 <= t.hi else s.at(s.t0, t.hi) or s.box))
            env.setdefault("time", Interval(s.t0, min(s.t1, t.hi)))
            if truth(inv, env) == CERTAIN_FALSE:
                return math.inf
    return w
