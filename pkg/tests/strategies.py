"""Shared hypothesis strategies for terms, formulas and boxes."""

from __future__ import annotations

from fractions import Fraction

from hypothesis import strategies as st

from deltareach.formula import And, Atom, Const, Or, Var, fn
from deltareach.interval import Box, Interval

VARS = ("x", "y")

consts = st.integers(-20, 20).map(lambda n: Const(Fraction(n, 4)))
leaves = st.one_of(st.sampled_from([Var(v) for v in VARS]), consts)


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from(["add", "sub", "mul"]), children, children).map(lambda t: fn(t[0], t[1], t[2])),
        st.tuples(st.sampled_from(["neg", "sin", "cos", "tanh"]), children).map(lambda t: fn(t[0], t[1])),
        children.map(lambda c: fn("pow", c, 2)),
    )


terms = st.recursive(leaves, _extend, max_leaves=6)

atoms = st.builds(lambda t, s, k: Atom(t, s, Fraction(k, 8)), terms, st.booleans(), st.integers(-8, 8))


def _combine(children):
    lists = st.lists(children, min_size=1, max_size=3).map(tuple)
    return st.one_of(lists.map(And), lists.map(Or))


formulas = st.recursive(atoms, _combine, max_leaves=5)

deltas = st.fractions(min_value=0, max_value=2, max_denominator=64)


@st.composite
def interval_in(draw, lo=-2.0, hi=2.0):
    a = draw(st.floats(lo, hi))
    b = draw(st.floats(lo, hi))
    return Interval(min(a, b), max(a, b))


@st.composite
def boxes(draw):
    return Box({v: draw(interval_in()) for v in VARS})


@st.composite
def box_and_point(draw):
    box = draw(boxes())
    pt = {}
    for v, i in box.items():
        pt[v] = draw(st.floats(i.lo, i.hi))
    return box, pt


points = st.fixed_dictionaries({v: st.floats(-2.0, 2.0) for v in VARS})
