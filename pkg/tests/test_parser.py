from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import assume, given

from deltareach.formula import App, Var, atoms, eval_float, eval_point
from deltareach.model import (
    DuplicateMode,
    MissingBound,
    ModelError,
    ModelSyntaxError,
    UnknownIdentifier,
    fmt_formula,
    fmt_term,
    serialize,
    validate,
)
from deltareach.parser import load_model, parse_formula, parse_model
from helpers import MODEL_NAMES, model_path
from strategies import formulas, points, terms

SMALL = """
var x in [0, 1];
param p in [1, 2];
param c = 3/2;
def rate = p * c;
mode 1 { inv: x <= 1; d/dt[x] = rate; }
mode 2 { d/dt[x] = -x; }
jump 1 -> 2 when x >= 1 reset { x' = x / 2; };
init mode 1 with x = 0;
"""


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_bundled_models_parse_and_validate(name):
    ha = load_model(model_path(name))
    assert validate(ha) == []
    assert ha.modes and ha.jumps and ha.initial


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_serialization_round_trip(name):
    ha = load_model(model_path(name))
    again = parse_model(serialize(ha), ha.name)
    assert again == ha
    assert serialize(again) == serialize(ha)


def test_small_model_structure():
    ha = parse_model(SMALL)
    assert ha.var_names == ["x"]
    assert ha.param_names == ["p", "c"]
    assert ha.param("c").fixed and ha.param("c").lo == Fraction(3, 2)
    assert not ha.param("p").fixed
    assert ha.successors(1) == [2]
    # definitions are inlined
    rhs = ha.mode(1).rhs["x"]
    assert eval_float(rhs, {"p": 2.0, "c": 1.5}) == 3.0
    jump = ha.jumps_between(1, 2)[0]
    assert eval_float(jump.reset_map["x"], {"x": 1.0}) == 0.5


def test_bouncing_ball_contents():
    ha = load_model(model_path("bouncing_ball"))
    assert ha.var_names == ["x", "v"]
    assert ha.init_modes() == [1]
    assert ha.variable("x").hi == 20


@pytest.mark.parametrize(
    "text, exc, where",
    [
        ("var x in [0,1]; mode 1 { d/dt[x] = y; }", UnknownIdentifier, "1:36"),
        ("var x; ", MissingBound, "1:5"),
        ("var x in [0,1]; mode 1 { d/dt[x] = 1; } mode 1 { d/dt[x] = 1; }", DuplicateMode, "1:46"),
        ("var x in [0,1]\nmode 1 { d/dt[x] = 1; }", ModelSyntaxError, "2:1"),
        ("var x in [0,1]; init mode 1 with x >= @;", ModelSyntaxError, "1:39"),
    ],
)
def test_errors_carry_positions(text, exc, where):
    with pytest.raises(exc) as info:
        parse_model(text)
    assert str(info.value).startswith(where)
    assert isinstance(info.value, ModelError)


def test_wrong_arity_is_rejected():
    with pytest.raises(ModelSyntaxError):
        parse_formula("exp(x, x) >= 0", names="x")


def test_jump_to_undeclared_mode():
    with pytest.raises(UnknownIdentifier, match="undeclared mode 3"):
        parse_model("var x in [0,1]; mode 1 { d/dt[x] = 1; } jump 1 -> 3 when x >= 1 reset {};")


def test_validate_reports_structural_problems():
    ha = parse_model("var x in [0,1]; var y in [0,1]; mode 1 { d/dt[x] = 1; }")
    codes = {d.code for d in validate(ha)}
    assert codes == {"missing-flow", "no-init"}


def test_non_smooth_flow_is_flagged():
    ha = parse_model("var x in [-1,1]; mode 1 { d/dt[x] = abs(x); } init mode 1 with x = 0;")
    assert [d.code for d in validate(ha)] == ["non-smooth-flow"]


def test_not_and_equalities():
    phi = parse_formula("not (x > 1) and x == 0.5", names="x")
    for x in (0.0, 0.5, 0.75, 1.0, 2.0):
        assert eval_point(phi, {"x": x}) == (x == 0.5)
    assert eval_point(parse_formula("not (x > 1)", names="x"), {"x": 1.0})


def test_numbers_are_exact():
    phi = parse_formula("x >= 0.1", names="x")
    assert Fraction(1, 10) in {t.value for t in _consts(phi)}


def _consts(phi):
    out = []

    def walk(t):
        if isinstance(t, App):
            for a in t.args:
                walk(a)
        elif not isinstance(t, Var):
            out.append(t)

    for a in atoms(phi):
        walk(a.term)
    return out


@given(terms, points)
def test_term_printing_round_trips(t, pt):
    back = parse_formula(f"{fmt_term(t)} >= 0", names="xy")
    try:
        want = eval_float(t, pt)
    except (OverflowError, ValueError):
        assume(False)
    assume(math.isfinite(want))
    got = eval_float(back.term, pt)
    assert math.isclose(got, want, rel_tol=1e-9, abs_tol=1e-9)


@given(formulas, points)
def test_formula_printing_round_trips(phi, pt):
    back = parse_formula(fmt_formula(phi), names="xy")
    try:
        want = eval_point(phi, pt)
    except (OverflowError, ValueError):
        assume(False)
    assume(all(abs(eval_float(a.term, pt) + float(a.slack)) > 1e-9 for a in atoms(phi)))
    assert eval_point(back, pt) == want
