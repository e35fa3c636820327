"""Symbolic simplification and differentiation of terms."""

from __future__ import annotations

from fractions import Fraction

from .formula import ONE, ZERO, App, Const, FormulaError, Term, Var

_NONSMOOTH = ("abs", "min", "max")


def _is(t: Term, v) -> bool:
    return isinstance(t, Const) and t.value == v


def mk(op: str, *args: Term) -> Term:
    """Build an application with light constant folding."""
    if op == "add":
        flat = []
        c = Fraction(0)
        for a in args:
            parts = a.args if isinstance(a, App) and a.op == "add" else (a,)
            for p in parts:
                if isinstance(p, Const):
                    c += p.value
                else:
                    flat.append(p)
        if c != 0 or not flat:
            flat.append(Const(c))
        return flat[0] if len(flat) == 1 else App("add", tuple(flat))
    if op == "mul":
        flat = []
        c = Fraction(1)
        for a in args:
            parts = a.args if isinstance(a, App) and a.op == "mul" else (a,)
            for p in parts:
                if isinstance(p, Const):
                    c *= p.value
                else:
                    flat.append(p)
        if c == 0:
            return ZERO
        if not flat:
            return Const(c)
        if c == -1:
            inner = flat[0] if len(flat) == 1 else App("mul", tuple(flat))
            return mk("neg", inner)
        if c != 1:
            flat.insert(0, Const(c))
        return flat[0] if len(flat) == 1 else App("mul", tuple(flat))
    if op == "sub":
        a, b = args
        if _is(b, 0):
            return a
        if _is(a, 0):
            return mk("neg", b)
        if isinstance(a, Const) and isinstance(b, Const):
            return Const(a.value - b.value)
        if a == b:
            return ZERO
        return App("sub", (a, b))
    if op == "neg":
        (a,) = args
        if isinstance(a, Const):
            return Const(-a.value)
        if isinstance(a, App) and a.op == "neg":
            return a.args[0]
        return App("neg", (a,))
    if op == "div":
        a, b = args
        if _is(a, 0):
            return ZERO
        if _is(b, 1):
            return a
        if isinstance(a, Const) and isinstance(b, Const) and b.value != 0:
            return Const(a.value / b.value)
        return App("div", (a, b))
    if op == "pow":
        a, b = args
        if _is(b, 0):
            return ONE
        if _is(b, 1):
            return a
        if isinstance(a, Const) and isinstance(b, Const) and b.value.denominator == 1 and a.value != 0:
            return Const(a.value ** int(b.value))
        return App("pow", (a, b))
    if all(isinstance(a, Const) for a in args) and op in ("min", "max", "abs"):
        vals = [a.value for a in args]
        return Const({"min": min, "max": max}[op](vals) if op != "abs" else abs(vals[0]))
    return App(op, tuple(args))


def simplify(t: Term) -> Term:
    if isinstance(t, (Var, Const)):
        return t
    return mk(t.op, *(simplify(a) for a in t.args))


def diff(t: Term, x: str) -> Term:
    """Partial derivative of ``t`` with respect to variable ``x``."""
    return simplify(_d(t, x))


def _d(t: Term, x: str) -> Term:
    if isinstance(t, Var):
        return ONE if t.name == x else ZERO
    if isinstance(t, Const):
        return ZERO
    op, args = t.op, t.args
    ds = [_d(a, x) for a in args]
    if all(_is(simplify(d), 0) for d in ds):
        return ZERO
    if op == "add":
        return mk("add", *ds)
    if op == "sub":
        return mk("sub", ds[0], ds[1])
    if op == "neg":
        return mk("neg", ds[0])
    if op == "mul":
        terms = []
        for i, d in enumerate(ds):
            others = [a for j, a in enumerate(args) if j != i]
            terms.append(mk("mul", d, *others))
        return mk("add", *terms)
    if op == "div":
        a, b = args
        da, db = ds
        return mk("sub", mk("div", da, b), mk("div", mk("mul", a, db), mk("pow", b, Const(2))))
    a = args[0]
    da = ds[0]
    if op == "exp":
        return mk("mul", t, da)
    if op == "log":
        return mk("div", da, a)
    if op == "sin":
        return mk("mul", App("cos", (a,)), da)
    if op == "cos":
        return mk("neg", mk("mul", App("sin", (a,)), da))
    if op == "sqrt":
        return mk("div", da, mk("mul", Const(2), t))
    if op == "tanh":
        return mk("mul", mk("sub", ONE, mk("pow", t, Const(2))), da)
    if op == "pow":
        b = args[1]
        db = ds[1]
        if isinstance(b, Const) or _is(simplify(db), 0):
            return mk("mul", b, mk("pow", a, mk("sub", b, ONE)), da)
        return mk("mul", t, mk("add", mk("mul", db, App("log", (a,))), mk("div", mk("mul", b, da), a)))
    if op in _NONSMOOTH:
        raise FormulaError(f"{op} is not differentiable")
    raise FormulaError(f"cannot differentiate {op}")


def is_smooth(t: Term) -> bool:
    if isinstance(t, (Var, Const)):
        return True
    if t.op in _NONSMOOTH:
        return False
    return all(is_smooth(a) for a in t.args)
