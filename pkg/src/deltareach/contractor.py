"""HC4-style forward-backward contraction of arithmetic atoms.

Domains are plain ``dict[str, Interval]`` that the functions narrow in
place. A return value of ``False`` means the domain became empty.
"""

from __future__ import annotations

import math

from . import interval as iv
from .formula import And, App, Atom, Const, Formula, Or, Var
from .interval import EMPTY, Interval

_POS = Interval(0.0, math.inf)


def _forward(t, dom, vals):
    if isinstance(t, Var):
        v = dom[t.name]
    elif isinstance(t, Const):
        v = Interval.from_rational(t.value)
    else:
        op = t.op
        args = [_forward(a, dom, vals) for a in t.args]
        if any(a.is_empty for a in args):
            v = EMPTY
        elif op == "add":
            v = args[0]
            for a in args[1:]:
                v = v + a
        elif op == "mul":
            v = args[0]
            for a in args[1:]:
                v = v * a
        elif op == "sub":
            v = args[0] - args[1]
        elif op == "neg":
            v = -args[0]
        elif op == "div":
            v = args[0] / args[1]
        elif op == "pow":
            e = t.args[1]
            v = iv.ipow(args[0], e.value if isinstance(e, Const) else args[1])
        elif op == "exp":
            v = iv.iexp(args[0])
        elif op == "log":
            v = iv.ilog(args[0])
        elif op == "sqrt":
            v = iv.isqrt(args[0])
        elif op == "sin":
            v = iv.isin(args[0])
        elif op == "cos":
            v = iv.icos(args[0])
        elif op == "tanh":
            v = iv.itanh(args[0])
        elif op == "abs":
            v = iv.iabs(args[0])
        elif op == "min":
            v = iv.imin(args[0], args[1])
        elif op == "max":
            v = iv.imax(args[0], args[1])
        else:  # pragma: no cover - guarded by App
            raise ValueError(op)
    key = id(t)
    old = vals.get(key)
    vals[key] = v if old is None else old.intersect(v)
    return vals[key]


def _root(r: Interval, n: int) -> Interval:
    """Enclosure of the non-negative n-th roots of r (r clipped to >= 0)."""
    r = r.intersect(_POS)
    if r.is_empty:
        return EMPTY
    return iv.ipow(r, iv.Fraction(1, n)) if n != 2 else iv.isqrt(r)


def _backward(t, r, dom, vals) -> bool:
    key = id(t)
    cur = vals[key].intersect(r)
    if cur.is_empty:
        return False
    vals[key] = cur
    if isinstance(t, Const):
        return True
    if isinstance(t, Var):
        nv = dom[t.name].intersect(cur)
        if nv.is_empty:
            return False
        dom[t.name] = nv
        return True
    op, args = t.op, t.args
    av = [vals[id(a)] for a in args]
    try:
        if op == "add":
            for i, a in enumerate(args):
                rest = cur
                for j, b in enumerate(av):
                    if j != i:
                        rest = rest - b
                if not _backward(a, rest, dom, vals):
                    return False
                av[i] = vals[id(a)]
            return True
        if op == "sub":
            return _backward(args[0], cur + av[1], dom, vals) and _backward(args[1], av[0] - cur, dom, vals)
        if op == "neg":
            return _backward(args[0], -cur, dom, vals)
        if op == "mul":
            for i, a in enumerate(args):
                others = None
                for j, b in enumerate(av):
                    if j != i:
                        others = b if others is None else others * b
                if others.contains(0.0) and cur.contains(0.0):
                    continue
                if not _backward(a, cur / others, dom, vals):
                    return False
                av[i] = vals[id(a)]
            return True
        if op == "div":
            a, b = av
            if not _backward(args[0], cur * b, dom, vals):
                return False
            a = vals[id(args[0])]
            if cur.contains(0.0) and a.contains(0.0):
                return True
            return _backward(args[1], a / cur, dom, vals)
        if op == "exp":
            pos = cur.intersect(_POS)
            if pos.is_empty or pos.hi <= 0.0:
                return False
            return _backward(args[0], iv.ilog(pos), dom, vals)
        if op == "log":
            return _backward(args[0], iv.iexp(cur), dom, vals)
        if op == "sqrt":
            pos = cur.intersect(_POS)
            if pos.is_empty:
                return False
            return _backward(args[0], iv.isqr(pos), dom, vals)
        if op == "tanh":
            return _backward(args[0], iv.iatanh(cur), dom, vals)
        if op == "pow":
            e = args[1]
            if not (isinstance(e, Const) and e.value.denominator == 1 and e.value > 0):
                return True
            n = int(e.value)
            if n == 1:
                return _backward(args[0], cur, dom, vals)
            root = _root(cur, n)
            if root.is_empty:
                return n % 2 == 1 and _backward(args[0], -_root(-cur, n), dom, vals)
            base = av[0]
            if n % 2 == 0:
                cand = base.intersect(root).hull(base.intersect(-root))
            else:
                neg = _root(-cur, n)
                cand = root if neg.is_empty else root.hull(-neg)
            return _backward(args[0], cand, dom, vals)
        if op == "abs":
            pos = cur.intersect(_POS)
            if pos.is_empty:
                return False
            base = av[0]
            cand = base.intersect(pos).hull(base.intersect(-pos))
            return _backward(args[0], cand, dom, vals)
        if op == "max":
            cap = Interval(-math.inf, cur.hi)
            return _backward(args[0], cap, dom, vals) and _backward(args[1], cap, dom, vals)
        if op == "min":
            cap = Interval(cur.lo, math.inf)
            return _backward(args[0], cap, dom, vals) and _backward(args[1], cap, dom, vals)
    except iv.DomainError:
        return False
    # sin, cos: no backward narrowing
    return True


def revise_atom(atom: Atom, dom: dict) -> bool:
    """Narrow ``dom`` by one atom. Returns False when no solution remains."""
    vals: dict = {}
    try:
        v = _forward(atom.term, dom, vals)
    except iv.DomainError:
        return False
    if v.is_empty:
        return False
    slack = Interval.from_rational(atom.slack) if atom.slack else None
    # t + s >= 0  =>  t >= -s ; strictness is relaxed to its closure
    lo = -slack.hi if slack is not None else 0.0
    target = Interval(lo, math.inf)
    return _backward(atom.term, target, dom, vals)


def contract(phi: Formula, dom: dict, flow_hook=None) -> bool:
    """One contraction pass of a formula over ``dom`` (modified in place).

    Disjunctions are contracted per disjunct and the surviving results
    hulled. ``flow_hook(node, dom)`` handles non-arithmetic leaves.
    """
    if isinstance(phi, Atom):
        return revise_atom(phi, dom)
    if isinstance(phi, And):
        for a in phi.args:
            if not contract(a, dom, flow_hook):
                return False
        return True
    if isinstance(phi, Or):
        if not phi.args:
            return False
        merged = None
        for a in phi.args:
            d = dict(dom)
            if contract(a, d, flow_hook):
                if merged is None:
                    merged = d
                else:
                    for k in merged:
                        merged[k] = merged[k].hull(d[k])
        if merged is None:
            return False
        dom.update(merged)
        return True
    if flow_hook is None:
        raise TypeError(f"no contractor for {type(phi).__name__}")
    return flow_hook(phi, dom)
