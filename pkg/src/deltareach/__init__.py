"""delta-decision reachability and parameter synthesis for nonlinear hybrid automata."""

from __future__ import annotations

from .bmc import (
    ReachQuery,
    ReachResult,
    WitnessTrace,
    check_reach,
    encode_step_system,
    enumerate_paths,
    global_goal,
    mode_goal,
    parse_goal,
    variable_count,
)
from .formula import TRUE, FALSE, Atom, And, Or, delta_weaken, eval_point
from .icp import BUDGET, DELTA_SAT, UNSAT, ConstraintSystem, SolverConfig, Verdict, certify_witness, decide, prune
from .interval import Box, Interval
from .model import HybridAutomaton, ModelError, serialize, validate
from .ode import FlowConstraint, StepControl, VectorField, integrate
from .parser import load_model, parse_formula, parse_model
from .synthesis import BoundaryFit, ThresholdQuery, binary_search_threshold, least_squares_line, sweep_boundary

__all__ = [
    "And", "Atom", "BUDGET", "BoundaryFit", "Box", "ConstraintSystem", "DELTA_SAT", "FALSE",
    "FlowConstraint", "HybridAutomaton", "Interval", "ModelError", "Or", "ReachQuery", "ReachResult",
    "SolverConfig", "StepControl", "TRUE", "ThresholdQuery", "UNSAT", "VectorField", "Verdict",
    "WitnessTrace", "binary_search_threshold", "certify_witness", "check_reach", "decide", "delta_weaken",
    "encode_step_system", "enumerate_paths", "eval_point", "global_goal", "integrate", "least_squares_line",
    "load_model", "mode_goal", "parse_formula", "parse_goal", "parse_model", "prune", "serialize",
    "sweep_boundary", "validate", "variable_count",
]
