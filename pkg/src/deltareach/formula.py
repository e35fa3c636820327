"""Terms and quantifier-free formulas over the reals.

Atoms are kept in the normal form ``t + slack > 0`` or ``t + slack >= 0``;
freshly built atoms have ``slack == 0`` and delta-weakening only raises the
slack. There is no negation node: :func:`negate` pushes negation into the
atoms. ``TRUE`` and ``FALSE`` are the empty conjunction and disjunction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Callable, Iterable, Mapping

from . import interval as iv
from .interval import Box, Interval, ShapeError

UNARY = ("neg", "exp", "log", "sin", "cos", "sqrt", "tanh", "abs")
BINARY = ("sub", "div", "pow", "min", "max")
NARY = ("add", "mul")
OPS = UNARY + BINARY + NARY


class FormulaError(ValueError):
    pass


def _frac(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, float):
        if not math.isfinite(v):
            raise FormulaError(f"non-finite constant {v}")
        return Fraction(v)
    return Fraction(v)


class Term:
    """Base class for arithmetic terms. Supports Python operator building."""

    __slots__ = ()

    def __add__(self, other):
        return App("add", (self, as_term(other)))

    def __radd__(self, other):
        return App("add", (as_term(other), self))

    def __sub__(self, other):
        return App("sub", (self, as_term(other)))

    def __rsub__(self, other):
        return App("sub", (as_term(other), self))

    def __mul__(self, other):
        return App("mul", (self, as_term(other)))

    def __rmul__(self, other):
        return App("mul", (as_term(other), self))

    def __truediv__(self, other):
        return App("div", (self, as_term(other)))

    def __rtruediv__(self, other):
        return App("div", (as_term(other), self))

    def __pow__(self, other):
        return App("pow", (self, as_term(other)))

    def __neg__(self):
        return App("neg", (self,))

    # comparison builders return formulas
    def ge(self, other) -> Formula:
        return ge(self, other)

    def le(self, other) -> Formula:
        return le(self, other)

    def gt(self, other) -> Formula:
        return gt(self, other)

    def lt(self, other) -> Formula:
        return lt(self, other)


@dataclass(frozen=True, eq=True)
class Var(Term):
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True, eq=True)
class Const(Term):
    value: Fraction

    def __post_init__(self):
        object.__setattr__(self, "value", _frac(self.value))

    def __str__(self):
        v = self.value
        if v.denominator == 1:
            return str(v.numerator)
        return repr(float(v)) if Fraction(float(v)) == v else f"{v.numerator}/{v.denominator}"


@dataclass(frozen=True, eq=True)
class App(Term):
    op: str
    args: tuple

    def __post_init__(self):
        if self.op not in OPS:
            raise FormulaError(f"unsupported function symbol {self.op!r}")
        n = len(self.args)
        if self.op in UNARY and n != 1:
            raise FormulaError(f"{self.op} takes one argument, got {n}")
        if self.op in BINARY and n != 2:
            raise FormulaError(f"{self.op} takes two arguments, got {n}")
        if self.op in NARY and n < 2:
            raise FormulaError(f"{self.op} takes at least two arguments, got {n}")
        for a in self.args:
            if not isinstance(a, Term):
                raise FormulaError(f"argument {a!r} of {self.op} is not a term")

    def __str__(self):
        return to_prefix(self)


def as_term(x) -> Term:
    if isinstance(x, Term):
        return x
    if isinstance(x, str):
        return Var(x)
    return Const(_frac(x))


def const(x) -> Const:
    return Const(_frac(x))


def var(name: str) -> Var:
    return Var(name)


def fn(op: str, *args) -> App:
    return App(op, tuple(as_term(a) for a in args))


ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


def free_vars(t) -> frozenset[str]:
    """Free variables of a term or formula."""
    if isinstance(t, Var):
        return frozenset((t.name,))
    if isinstance(t, Const):
        return frozenset()
    if isinstance(t, App):
        return frozenset().union(*(free_vars(a) for a in t.args))
    if isinstance(t, Formula):
        return t.free_vars()
    raise FormulaError(f"not a term or formula: {t!r}")


# -- formulas -----------------------------------------------------------------

class Formula:
    __slots__ = ()

    def free_vars(self) -> frozenset[str]:
        raise NotImplementedError

    def __and__(self, other):
        return conj(self, other)

    def __or__(self, other):
        return disj(self, other)


@dataclass(frozen=True, eq=True)
class Atom(Formula):
    """``term + slack > 0`` when strict, ``term + slack >= 0`` otherwise."""

    term: Term
    strict: bool = False
    slack: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "slack", _frac(self.slack))

    def free_vars(self):
        return free_vars(self.term)

    def __str__(self):
        return to_prefix(self)


@dataclass(frozen=True, eq=True)
class And(Formula):
    args: tuple = ()

    def free_vars(self):
        return frozenset().union(*(a.free_vars() for a in self.args))

    def __str__(self):
        return to_prefix(self)


@dataclass(frozen=True, eq=True)
class Or(Formula):
    args: tuple = ()

    def free_vars(self):
        return frozenset().union(*(a.free_vars() for a in self.args))

    def __str__(self):
        return to_prefix(self)


TRUE = And(())
FALSE = Or(())


def conj(*parts: Formula) -> Formula:
    flat = []
    for p in parts:
        if isinstance(p, And):
            flat.extend(p.args)
        else:
            flat.append(p)
    if any(p == FALSE for p in flat):
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def disj(*parts: Formula) -> Formula:
    flat = []
    for p in parts:
        if isinstance(p, Or):
            flat.extend(p.args)
        else:
            flat.append(p)
    if any(p == TRUE for p in flat):
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def ge(a, b) -> Atom:
    return Atom(_lhs(a, b), False)


def gt(a, b) -> Atom:
    return Atom(_lhs(a, b), True)


def le(a, b) -> Atom:
    return Atom(_lhs(b, a), False)


def lt(a, b) -> Atom:
    return Atom(_lhs(b, a), True)


def eq(a, b) -> Formula:
    """Equality as the conjunction of two non-strict atoms."""
    return And((ge(a, b), le(a, b)))


def _lhs(a, b) -> Term:
    a, b = as_term(a), as_term(b)
    if b == ZERO:
        return a
    return App("sub", (a, b))


# -- weakening and negation -----------------------------------------------------

def delta_weaken(phi: Formula, delta) -> Formula:
    """Replace every atom ``t > 0`` by ``t > -delta`` (and likewise for ``>=``)."""
    d = _frac(delta)
    if d < 0:
        raise FormulaError(f"delta must be non-negative, got {delta}")
    if d == 0:
        return phi
    return _weaken(phi, d)


def _weaken(phi, d):
    if isinstance(phi, Atom):
        return Atom(phi.term, phi.strict, phi.slack + d)
    if isinstance(phi, And):
        return And(tuple(_weaken(a, d) for a in phi.args))
    if isinstance(phi, Or):
        return Or(tuple(_weaken(a, d) for a in phi.args))
    weaken = getattr(phi, "weakened", None)
    if weaken is not None:
        return weaken(d)
    raise FormulaError(f"cannot weaken {phi!r}")


def negate_term(t: Term) -> Term:
    if isinstance(t, App) and t.op == "neg":
        return t.args[0]
    if isinstance(t, Const):
        return Const(-t.value)
    return App("neg", (t,))


def negate(phi: Formula) -> Formula:
    """Negation as an operation: atoms flip strictness and sign, and/or swap."""
    if isinstance(phi, Atom):
        # not (t + s > 0)  <=>  -t - s >= 0
        return Atom(negate_term(phi.term), not phi.strict, -phi.slack)
    if isinstance(phi, And):
        return Or(tuple(negate(a) for a in phi.args))
    if isinstance(phi, Or):
        return And(tuple(negate(a) for a in phi.args))
    raise FormulaError(f"cannot negate {type(phi).__name__}")


def atoms(phi: Formula) -> Iterable[Atom]:
    if isinstance(phi, Atom):
        yield phi
    elif isinstance(phi, (And, Or)):
        for a in phi.args:
            yield from atoms(a)


def map_terms(phi: Formula, f: Callable[[Term], Term]) -> Formula:
    if isinstance(phi, Atom):
        return Atom(f(phi.term), phi.strict, phi.slack)
    if isinstance(phi, And):
        return And(tuple(map_terms(a, f) for a in phi.args))
    if isinstance(phi, Or):
        return Or(tuple(map_terms(a, f) for a in phi.args))
    raise FormulaError(f"cannot map over {type(phi).__name__}")


def substitute(t, mapping: Mapping[str, Term]):
    """Replace variables by terms in a term or a (flow-free) formula."""
    if isinstance(t, Formula):
        return map_terms(t, lambda s: substitute(s, mapping))
    if isinstance(t, Var):
        return mapping.get(t.name, t)
    if isinstance(t, Const):
        return t
    return App(t.op, tuple(substitute(a, mapping) for a in t.args))


def rename(t, mapping: Mapping[str, str]):
    return substitute(t, {k: Var(v) for k, v in mapping.items()})


# -- evaluation -----------------------------------------------------------------

_UNARY_IV = {
    "neg": lambda a: -a,
    "exp": iv.iexp,
    "log": iv.ilog,
    "sin": iv.isin,
    "cos": iv.icos,
    "sqrt": iv.isqrt,
    "tanh": iv.itanh,
    "abs": iv.iabs,
}


def eval_interval(term: Term, env: Mapping[str, Interval]) -> Interval:
    """Natural interval extension of ``term`` over the box ``env``."""
    if isinstance(term, Var):
        try:
            return env[term.name]
        except KeyError:
            raise ShapeError(f"unbound variable {term.name}") from None
    if isinstance(term, Const):
        return Interval.from_rational(term.value)
    op, args = term.op, term.args
    if op == "add":
        return reduce(lambda x, y: x + y, (eval_interval(a, env) for a in args))
    if op == "mul":
        return reduce(lambda x, y: x * y, (eval_interval(a, env) for a in args))
    if op == "pow":
        base = eval_interval(args[0], env)
        e = args[1]
        if isinstance(e, Const):
            return iv.ipow(base, e.value)
        return iv.ipow(base, eval_interval(e, env))
    if op in _UNARY_IV:
        return _UNARY_IV[op](eval_interval(args[0], env))
    a = eval_interval(args[0], env)
    b = eval_interval(args[1], env)
    if op == "sub":
        return a - b
    if op == "div":
        return a / b
    if op == "min":
        return iv.imin(a, b)
    if op == "max":
        return iv.imax(a, b)
    raise FormulaError(f"unknown op {op}")


_UNARY_F = {
    "neg": lambda a: -a,
    "exp": math.exp,
    "log": math.log,
    "sin": math.sin,
    "cos": math.cos,
    "sqrt": math.sqrt,
    "tanh": math.tanh,
    "abs": abs,
}


def eval_float(term: Term, env: Mapping[str, float]) -> float:
    """Plain floating-point evaluation (no rounding control)."""
    if isinstance(term, Var):
        try:
            return float(env[term.name])
        except KeyError:
            raise ShapeError(f"unbound variable {term.name}") from None
    if isinstance(term, Const):
        return float(term.value)
    op, args = term.op, term.args
    if op == "add":
        return math.fsum(eval_float(a, env) for a in args)
    if op == "mul":
        return reduce(lambda x, y: x * y, (eval_float(a, env) for a in args))
    if op in _UNARY_F:
        return _UNARY_F[op](eval_float(args[0], env))
    a = eval_float(args[0], env)
    b = eval_float(args[1], env)
    if op == "sub":
        return a - b
    if op == "div":
        return a / b
    if op == "pow":
        return a ** b
    if op == "min":
        return min(a, b)
    if op == "max":
        return max(a, b)
    raise FormulaError(f"unknown op {op}")


def _point_env(point) -> dict[str, float]:
    if isinstance(point, Box):
        env = {}
        for k, v in point.items():
            env[k] = v.mid()
        return env
    return {k: (v.mid() if isinstance(v, Interval) else float(v)) for k, v in point.items()}


def eval_point(phi: Formula, point) -> bool:
    """Truth value of a flow-free formula at a point (midpoint arithmetic)."""
    env = _point_env(point)
    return _eval_point(phi, env)


def _eval_point(phi, env):
    if isinstance(phi, Atom):
        v = eval_float(phi.term, env) + float(phi.slack)
        return v > 0.0 if phi.strict else v >= 0.0
    if isinstance(phi, And):
        return all(_eval_point(a, env) for a in phi.args)
    if isinstance(phi, Or):
        return any(_eval_point(a, env) for a in phi.args)
    raise FormulaError(f"eval_point does not handle {type(phi).__name__}")


# three-valued interval truth
CERTAIN_TRUE = 1
UNKNOWN = 0
CERTAIN_FALSE = -1


def atom_truth(a: Atom, env: Mapping[str, Interval], extra_slack: float = 0.0) -> int:
    try:
        v = eval_interval(a.term, env)
    except iv.DomainError:
        return CERTAIN_FALSE
    if v.is_empty:
        return CERTAIN_FALSE
    s = Interval.from_rational(a.slack) + extra_slack if (a.slack or extra_slack) else None
    if s is not None:
        v = v + s
    if a.strict:
        if v.lo > 0.0:
            return CERTAIN_TRUE
        if v.hi <= 0.0:
            return CERTAIN_FALSE
    else:
        if v.lo >= 0.0:
            return CERTAIN_TRUE
        if v.hi < 0.0:
            return CERTAIN_FALSE
    return UNKNOWN


def truth(phi: Formula, env: Mapping[str, Interval], extra_slack: float = 0.0) -> int:
    """Three-valued truth of a flow-free formula over a box."""
    if isinstance(phi, Atom):
        return atom_truth(phi, env, extra_slack)
    if isinstance(phi, And):
        out = CERTAIN_TRUE
        for a in phi.args:
            r = truth(a, env, extra_slack)
            if r == CERTAIN_FALSE:
                return CERTAIN_FALSE
            if r == UNKNOWN:
                out = UNKNOWN
        return out
    if isinstance(phi, Or):
        out = CERTAIN_FALSE
        for a in phi.args:
            r = truth(a, env, extra_slack)
            if r == CERTAIN_TRUE:
                return CERTAIN_TRUE
            if r == UNKNOWN:
                out = UNKNOWN
        return out
    raise FormulaError(f"interval truth does not handle {type(phi).__name__}")


# -- prefix serialization ---------------------------------------------------------

_OP_SYM = {"add": "+", "sub": "-", "mul": "*", "div": "/", "neg": "-", "pow": "^"}


def to_prefix(x) -> str:
    """Debug dump in prefix notation, e.g. ``(>= (- x 1) 0)``."""
    if isinstance(x, (Var, Const)):
        return str(x)
    if isinstance(x, App):
        return "(" + " ".join([_OP_SYM.get(x.op, x.op)] + [to_prefix(a) for a in x.args]) + ")"
    if isinstance(x, Atom):
        rel = ">" if x.strict else ">="
        rhs = Const(-x.slack)
        return f"({rel} {to_prefix(x.term)} {rhs})"
    if isinstance(x, And):
        return "true" if not x.args else "(and " + " ".join(to_prefix(a) for a in x.args) + ")"
    if isinstance(x, Or):
        return "false" if not x.args else "(or " + " ".join(to_prefix(a) for a in x.args) + ")"
    return repr(x)
