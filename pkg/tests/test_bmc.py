from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltareach.bmc import (
    QueryError,
    ReachQuery,
    WitnessTrace,
    check_reach,
    degrees_of_freedom,
    encode_step_system,
    enumerate_paths,
    parse_goal,
    variable_count,
)
from deltareach.formula import TRUE
from deltareach.icp import DELTA_SAT, UNSAT, SolverConfig
from deltareach.model import ModelError
from deltareach.parser import load_model, parse_model
from automata import expected, goal_text, random_spec
from helpers import model_path

K_MAX = 2
DELTA = 1e-3


def oracle_case(seed: int):
    """Returns (oracle verdict or None, solver verdict, spec)."""
    spec = random_spec(random.Random(seed))
    want = expected(spec, K_MAX)
    ha = parse_model(spec.text)
    q = ReachQuery(ha, parse_goal(goal_text(spec), ha), K_MAX, spec.M, DELTA)
    got = check_reach(q, SolverConfig(delta=DELTA, time_limit=30)).status
    return want, got, spec


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40)
def test_encoder_matches_linear_oracle(seed):
    want, got, spec = oracle_case(seed)
    if want is not None:
        assert got == want, spec.text + goal_text(spec)


@pytest.fixture(scope="module")
def ball():
    return load_model(model_path("bouncing_ball"))


def test_variable_count_formula(ball):
    assert [variable_count(ball, k) for k in range(4)] == [7, 14, 21, 28]
    bcf = load_model(model_path("bcf"))
    assert bcf.var_names == ["u", "v", "w", "s", "tau"]
    assert variable_count(bcf, 3) == (5 + 1) * 2 * 4 + 4
    sweep = bcf.with_param("tau_o1", 0, 1)
    assert variable_count(sweep, 3) == variable_count(bcf, 3) + 1


def test_encoded_box_names(ball):
    q = ReachQuery(ball, parse_goal("x <= 0.1", ball), 2)
    sys = encode_step_system(ball, (1, 2, 1), q)
    want = {f"{v}@{i}{s}" for v in "xv" for i in range(3) for s in ("", "t")} | {f"t@{i}" for i in range(3)}
    assert set(sys.box.names) == want
    # the mode clock is folded into the dwell variable when no mode reads it
    assert len(want) == variable_count(ball, 2) - 2 * 3


def test_degrees_of_freedom(ball):
    assert degrees_of_freedom(ball, 1) == ("x@0", "v@0", "t@0", "t@1")


def test_paths_are_lexicographic(ball):
    goal = parse_goal("x <= 0.1", ball)
    assert list(enumerate_paths(ball, goal, 0)) == [(1,)]
    assert list(enumerate_paths(ball, goal, 3)) == [(1, 2, 1, 2)]
    assert list(enumerate_paths(ball, parse_goal("mode=2", ball), 2)) == []


def test_goal_forms(ball):
    assert parse_goal("mode=2", ball) == ((2, TRUE),)
    g = parse_goal("mode=1 && x >= 3", ball)
    assert g[0][0] == 1 and g[0][1] != TRUE
    assert [q for q, _ in parse_goal("x >= 3", ball)] == [1, 2]
    with pytest.raises(ModelError):
        parse_goal("mode=9", ball)


def test_query_validation(ball):
    with pytest.raises(QueryError):
        ReachQuery(ball, ((9, TRUE),))
    with pytest.raises(QueryError):
        ReachQuery(ball, ((1, TRUE),), k_max=-1)
    with pytest.raises(QueryError):
        encode_step_system(ball, (1, 1), ReachQuery(ball, ((1, TRUE),)))


def test_ball_reaches_floor_with_free_fall_time(ball):
    q = ReachQuery(ball, parse_goal("x <= 0.1", ball), 0, 10.0, 1e-3)
    r = check_reach(q)
    assert r.status == DELTA_SAT
    assert r.k == 0 and r.path == (1,)
    t = r.trace.dwell[0].mid()
    # free fall from 10 to 0.1 under g = 9.8
    assert abs(t - math.sqrt(2 * 9.9 / 9.8)) < 0.01
    assert r.var_count == variable_count(ball, 0)


def test_ball_never_exceeds_start(ball):
    q = ReachQuery(ball, parse_goal("x >= 10.5", ball), 3, 10.0, 1e-3)
    assert check_reach(q).status == UNSAT


def test_witness_round_trip(ball):
    q = ReachQuery(ball, parse_goal("mode=1 and x <= 0.1", ball), 2, 10.0, 1e-3)
    r = check_reach(q)
    assert r.status == DELTA_SAT
    again = WitnessTrace.from_text(r.trace.to_text())
    assert again.path == r.trace.path
    assert again.dwell == r.trace.dwell
    assert [b.as_dict() for b in again.pre] == [b.as_dict() for b in r.trace.pre]
    assert [b.as_dict() for b in again.post] == [b.as_dict() for b in r.trace.post]


def test_witness_rejects_garbage():
    with pytest.raises(ValueError):
        WitnessTrace.from_text("hello\n")
    with pytest.raises(ValueError):
        WitnessTrace.from_text("witness-trace 1\npath 1 2\nstep 0 mode 1 dwell [0, 1]\n")
