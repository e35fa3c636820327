from __future__ import annotations

import pytest

from deltareach.bmc import parse_goal
from deltareach.icp import SolverConfig
from deltareach.model import ModelError
from deltareach.parser import parse_model
from deltareach.synthesis import (
    ABOVE,
    BELOW,
    DegenerateFit,
    InsufficientData,
    SearchAborted,
    SynthesisError,
    ThresholdQuery,
    binary_search_threshold,
    least_squares_line,
    sweep_boundary,
)

# x reaches 0.5 within one time unit iff p >= 0.5
RAMP = """
var x in [0, 10];
param p in [0, 1];
mode 1 { d/dt[x] = p; }
init mode 1 with x = 0;
"""

# the mirror image: reachable iff p <= 0.5
FALL = """
var x in [0, 10];
param p in [0, 1];
mode 1 { d/dt[x] = 1 - p; }
init mode 1 with x = 0;
"""

# reachable iff 2 p1 + p2 <= 3
PLANE = """
var x in [-10, 10];
param p1 in [0, 1];
param p2 in [0, 4];
mode 1 { d/dt[x] = 3.5 - 2 * p1 - p2; }
init mode 1 with x = 0;
"""

# reachable only for p in [0.4, 0.6]
BAND = """
var x in [-10, 10];
param p in [0, 1];
mode 1 { d/dt[x] = 1 - 100 * (p - 0.5)^2; }
init mode 1 with x = 0;
"""


def _query(text, goal="x >= 0.5", **kw):
    ha = parse_model(text)
    kw.setdefault("delta", 1e-3)
    kw.setdefault("M", 1.0)
    kw.setdefault("k_max", 0)
    return ThresholdQuery(ha, parse_goal(goal, ha), kw.pop("param", "p"), kw.pop("v_min", 0.0),
                          kw.pop("v_max", 1.0), **kw)


def test_ramp_threshold():
    r = binary_search_threshold(_query(RAMP, polarity=ABOVE))
    assert 0.499 <= r.threshold <= 0.501
    lo, hi = r.bracket
    assert hi - lo <= 1e-3
    assert lo <= r.threshold <= hi
    assert r.calls == len(r.history) == 10


def test_polarity_below_mirrors_search():
    r = binary_search_threshold(_query(FALL, polarity=BELOW))
    assert 0.499 <= r.threshold <= 0.501


def test_coarse_eps_stops_early():
    r = binary_search_threshold(_query(RAMP, eps=0.1))
    assert r.calls == 4
    assert abs(r.threshold - 0.5) <= 0.1


def test_range_narrower_than_eps_returns_midpoint():
    r = binary_search_threshold(_query(RAMP, v_min=0.2, v_max=0.25, eps=0.1))
    assert r.calls == 0
    assert r.threshold == 0.225


def test_budget_aborts_with_bracket():
    q = _query(RAMP, config=SolverConfig(delta=1e-3, time_limit=0.0))
    with pytest.raises(SearchAborted) as info:
        binary_search_threshold(q)
    assert info.value.bracket == (0.0, 1.0)
    assert len(info.value.history) == 1


def test_non_monotone_reachability_warns():
    with pytest.warns(RuntimeWarning, match="not monotone"):
        r = binary_search_threshold(_query(BAND, eps=0.1, check_monotone=True))
    assert r.warnings


def test_monotone_ramp_is_quiet(recwarn):
    r = binary_search_threshold(_query(RAMP, eps=0.1, check_monotone=True))
    assert r.warnings == []
    assert not [w for w in recwarn if issubclass(w.category, RuntimeWarning)]


def test_query_validation():
    with pytest.raises(SynthesisError):
        _query(RAMP, polarity="sideways")
    with pytest.raises(SynthesisError):
        _query(RAMP, v_min=1.0, v_max=0.5)
    with pytest.raises(ModelError):
        _query(RAMP, param="q")


def test_least_squares_example():
    slope, intercept, rss = least_squares_line([(0, 0), (1, 2), (2, 3.9)])
    assert slope == pytest.approx(1.95)
    assert intercept == pytest.approx(0.05 / 3)
    assert rss == pytest.approx(sum(r * r for r in (-0.05 / 3, 0.1 / 3, -0.05 / 3)))


def test_least_squares_errors():
    with pytest.raises(InsufficientData):
        least_squares_line([(1, 2)])
    with pytest.raises(DegenerateFit):
        least_squares_line([(1, 2), (1, 3)])


def test_plane_boundary():
    ha = parse_model(PLANE)
    fit = sweep_boundary(ha, parse_goal("x >= 0.5", ha), "p1", [0.0, 0.5, 1.0], "p2", (0.0, 4.0),
                         delta=1e-3, k_max=0, M=1.0)
    assert fit.a == pytest.approx(2.0, rel=0.01)
    assert fit.c == pytest.approx(3.0, rel=0.01)
    assert fit.unreachable_when == ">="
    assert [x for x, _ in fit.samples] == [0.0, 0.5, 1.0]
    assert fit.failed == []
    assert "unreachable when" in fit.to_text("p1", "p2")


def test_sweep_workers_agree():
    ha = parse_model(PLANE)
    goal = parse_goal("x >= 0.5", ha)
    a = sweep_boundary(ha, goal, "p1", [0.0, 1.0], "p2", (0.0, 4.0), delta=1e-3, eps=0.01, k_max=0, M=1.0)
    b = sweep_boundary(ha, goal, "p1", [0.0, 1.0], "p2", (0.0, 4.0), delta=1e-3, eps=0.01, k_max=0, M=1.0,
                       workers=2)
    assert a.samples == b.samples


def test_sweep_needs_two_samples():
    ha = parse_model(PLANE)
    with pytest.raises(InsufficientData):
        sweep_boundary(ha, parse_goal("x >= 0.5", ha), "p1", [0.5], "p2", (0.0, 4.0), delta=1e-3, M=1.0)


def test_sweep_with_every_search_aborted():
    ha = parse_model(PLANE)
    cfg = SolverConfig(delta=1e-3, time_limit=0.0)
    with pytest.raises(InsufficientData):
        sweep_boundary(ha, parse_goal("x >= 0.5", ha), "p1", [0.0, 1.0], "p2", (0.0, 4.0), delta=1e-3,
                       k_max=0, M=1.0, config=cfg)


def test_result_text():
    r = binary_search_threshold(_query(RAMP, eps=0.1))
    text = r.to_text("p")
    assert text.startswith("threshold p = ")
    assert text.count("probe") == 4
