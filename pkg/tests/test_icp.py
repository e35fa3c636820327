from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltareach.formula import And, delta_weaken, eval_point, ge, le
from deltareach.icp import (
    BUDGET,
    DELTA_SAT,
    UNSAT,
    ConstraintSystem,
    SolverConfig,
    certify_witness,
    decide,
    prune,
)
from deltareach.interval import Box, Interval
from deltareach.parser import parse_formula
from systems import DELTA, infeasible, planted

seeds = st.integers(0, 2**32 - 1)
CFG = SolverConfig(delta=DELTA, time_limit=5)


@given(seeds)
@settings(max_examples=40)
def test_planted_systems_are_never_refuted(seed):
    sys, point = planted(random.Random(seed))
    v = decide(sys, CFG)
    assert v.status != UNSAT
    if v.status == DELTA_SAT:
        assert eval_point(delta_weaken(sys.formula, Fraction(DELTA)), v.witness)
        assert max(i.width() for _, i in v.witness.items()) <= DELTA / 10


@given(seeds)
@settings(max_examples=40)
def test_infeasible_systems_are_never_delta_sat(seed):
    sys, kind = infeasible(random.Random(seed))
    assert decide(sys, CFG).status != DELTA_SAT, kind


@given(seeds)
@settings(max_examples=40)
def test_pruning_keeps_planted_point(seed):
    sys, point = planted(random.Random(seed))
    out = prune(sys.box, sys.formula)
    assert out is not None
    for v, x in point.items():
        assert out[v].inflate(1e-9).contains(x)


def test_circle_meets_line():
    phi = parse_formula("x^2 + y^2 = 1 and x = y", names="xy")
    box = Box({"x": Interval(0.0, 2.0), "y": Interval(0.0, 2.0)})
    v = decide(ConstraintSystem(box, phi, 1e-3))
    assert v.status == DELTA_SAT
    assert abs(v.witness["x"].mid() - 2 ** -0.5) < 1e-2


def test_either_answer_inside_the_delta_halo():
    # x^2 <= -1e-4 is unsat, its 1e-3 weakening is not: both answers are correct
    phi = parse_formula("x^2 <= -0.0001", names="x")
    box = Box({"x": Interval(-1.0, 1.0)})
    sys = ConstraintSystem(box, phi, 1e-3)
    assert decide(sys).status == UNSAT
    # pruning the 0.9 delta weakening keeps the halo and finds a witness there
    v = decide(sys, SolverConfig(delta=1e-3, prune_slack=0.9))
    assert v.status == DELTA_SAT
    assert abs(v.witness["x"].mid()) < 0.04
    # outside the halo only unsat is correct
    assert decide(ConstraintSystem(box, phi, 1e-5), SolverConfig(delta=1e-5, prune_slack=0.9)).status == UNSAT


def test_budget_is_reported():
    phi = parse_formula("sin(1000 * x) * cos(1000 * y) >= 0.9999 and x = y", names="xy")
    box = Box({"x": Interval(-1.0, 1.0), "y": Interval(-1.0, 1.0)})
    cfg = SolverConfig(delta=1e-9, max_splits=20)
    assert decide(ConstraintSystem(box, phi, 1e-9), cfg).status == BUDGET


def test_certify_requires_weakened_truth():
    phi = And((ge("x", 1), le("x", 1)))
    assert certify_witness(Box({"x": Interval(0.9995, 1.0005)}), phi, Fraction(1, 1000))
    assert not certify_witness(Box({"x": Interval(0.99, 1.01)}), phi, Fraction(1, 1000))
    with pytest.raises(ValueError):
        certify_witness(Box({"x": Interval(1.0)}), phi, -1)


def test_unbounded_variables_rejected():
    with pytest.raises(ValueError):
        ConstraintSystem(Box({"x": Interval(0.0, 1.0)}), ge("y", 0), 1e-3)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(delta=0)
    with pytest.raises(ValueError):
        SolverConfig(workers=0)
    with pytest.raises(ValueError):
        SolverConfig(prune_slack=1.0)


def test_parallel_workers_agree():
    rng = random.Random(3)
    for _ in range(10):
        sys, _ = planted(rng)
        a = decide(sys, CFG).status
        b = decide(sys, SolverConfig(delta=DELTA, time_limit=5, workers=4)).status
        assert a == b == DELTA_SAT


def test_weakened_pruning_is_sound_for_refutation():
    sys, _ = infeasible(random.Random(11))
    cfg = SolverConfig(delta=DELTA, time_limit=5, prune_slack=0.9)
    assert decide(sys, cfg).status != DELTA_SAT
