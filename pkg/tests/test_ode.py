from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltareach.interval import Box, Interval, ShapeError
from deltareach.ode import (
    EnclosureEscape,
    FlowConstraint,
    StepControl,
    VectorField,
    check_invariant_along,
    flow_residual,
    integrate,
    prune_flow,
)
from deltareach.parser import parse_formula
from oracles import FAMILIES, check_draw, term


def _field(rhs: dict, params=()):
    names = list(rhs) + list(params)
    return VectorField({k: term(v, names) for k, v in rhs.items()}, params)


@pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f.name)
@given(seed=st.integers(0, 2**32 - 1), radius=st.sampled_from([0.0, 1e-6, 1e-3]))
@settings(max_examples=15)
def test_enclosure_contains_reference_solution(fam, seed, radius):
    ok, msg = check_draw(fam, random.Random(seed), radius)
    assert ok, msg


def test_constant_rate_is_exact_enough():
    enc = integrate(_field({"x": "2"}), Box({"x": Interval(1.0, 1.0)}), horizon=3.0)
    end = enc.final()["x"]
    assert end.contains(7.0)
    assert end.width() < 1e-9


def test_linear_decay_end_is_tight():
    enc = integrate(_field({"x": "-x"}), Box({"x": Interval(1.0, 1.0)}), horizon=1.0,
                    control=StepControl(target=1e-8))
    end = enc.final()["x"]
    assert end.contains(math.exp(-1.0))
    assert end.width() < 1e-6


def test_segments_cover_horizon():
    enc = integrate(_field({"x": "v", "v": "-x"}), Box({"x": Interval(1.0), "v": Interval(0.0)}), horizon=2.0)
    segs = enc.segments
    assert segs[0].t0 == 0.0
    assert segs[-1].t1 == 2.0
    for a, b in zip(segs, segs[1:]):
        assert a.t1 == b.t0


def test_zero_horizon_returns_initial_box():
    enc = integrate(_field({"x": "x^2"}), Box({"x": Interval(0.5, 0.6)}), horizon=0.0)
    assert enc.final()["x"].is_subset(Interval(0.5, 0.6).inflate(1e-12))


def test_blow_up_is_reported():
    # x' = x^2 from 1 escapes at t = 1
    with pytest.raises(EnclosureEscape):
        integrate(_field({"x": "x^2"}), Box({"x": Interval(1.0)}), horizon=2.0,
                  control=StepControl(max_steps=2000))


def test_missing_dimension_rejected():
    with pytest.raises(ShapeError):
        integrate(_field({"x": "-a * x"}, ["a"]), Box({"x": Interval(1.0)}), horizon=1.0)


def test_reversed_field_runs_backwards():
    f = _field({"x": "-x"})
    enc = integrate(f.reversed(), Box({"x": Interval(math.exp(-1.0))}), horizon=1.0)
    assert enc.final()["x"].contains(1.0)


def _decay_constraint(invariant=None):
    f = _field({"x": "-x"})
    kw = {} if invariant is None else {"invariant": invariant}
    return FlowConstraint(1, f, {"x": "x0"}, {"x": "xt"}, "t", **kw)


@given(lo=st.floats(1.0, 1.5), w=st.floats(0.0, 0.5), tlo=st.floats(0.0, 0.5),
       u=st.floats(0.0, 1.0), v=st.floats(0.0, 1.0))
@settings(max_examples=60)
def test_flow_pruning_keeps_true_pairs(lo, w, tlo, u, v):
    X0 = Interval(lo, lo + w)
    T = Interval(tlo, 1.0)
    x0 = min(lo + u * w, X0.hi)
    t = min(tlo + v * (1.0 - tlo), 1.0)
    xt = x0 * math.exp(-t)
    fc = _decay_constraint()
    res = prune_flow(fc, {"x": X0}, {"x": Interval(0.0, 3.0)}, T)
    assert res is not None
    bx0, bxt, bt = res
    assert bx0["x"].contains(x0)
    assert bt.contains(t)
    assert bxt["x"].inflate(1e-12).contains(xt)


def test_flow_pruning_refutes_impossible_targets():
    fc = _decay_constraint()
    assert prune_flow(fc, {"x": Interval(1.0, 2.0)}, {"x": Interval(2.5, 3.0)}, Interval(0.0, 1.0)) is None


def test_flow_pruning_narrows_time():
    fc = _decay_constraint()
    target = math.exp(-0.5)
    res = prune_flow(fc, {"x": Interval(1.0)}, {"x": Interval(target - 1e-6, target + 1e-6)}, Interval(0.0, 1.0))
    assert res is not None
    assert res[2].contains(0.5)
    assert res[2].width() < 1e-3


def test_flow_residual_small_on_true_pair():
    fc = _decay_constraint()
    dom = {"x0": Interval(1.0), "xt": Interval(math.exp(-0.5)), "t": Interval(0.5)}
    assert flow_residual(fc, dom) < 1e-6
    dom["xt"] = Interval(0.5)
    assert flow_residual(fc, dom) > 0.1


def test_invariant_classification():
    enc = integrate(_field({"x": "-x"}), Box({"x": Interval(1.0)}), horizon=1.0)
    assert check_invariant_along(parse_formula("x >= 0.3", names="x"), enc) == "certainly-holds"
    assert check_invariant_along(parse_formula("x >= 2", names="x"), enc) == "certainly-violated"
    # the last step straddles e^-1
    assert check_invariant_along(parse_formula("x >= 0.36788", names="x"), enc) == "unknown"
