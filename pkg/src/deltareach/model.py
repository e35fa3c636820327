"""Hybrid automata: data model, validation, overrides and serialization."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping

from .formula import (
    TRUE,
    And,
    App,
    Atom,
    Const,
    Formula,
    Or,
    Term,
    Var,
    conj,
    free_vars,
    ge,
    le,
)
from .interval import Interval
from .symbolic import is_smooth

CLOCK = "time"


class ModelError(ValueError):
    kind = "model-error"


class ModelSyntaxError(ModelError):
    kind = "syntax-error"

    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.line = line
        self.col = col


class UnknownIdentifier(ModelError):
    kind = "unknown-identifier"


class MissingBound(ModelError):
    kind = "missing-bound"


class DuplicateMode(ModelError):
    kind = "duplicate-mode"


@dataclass(frozen=True)
class Variable:
    name: str
    lo: Fraction
    hi: Fraction

    @property
    def bound(self) -> Interval:
        return Interval(Interval.from_rational(self.lo).lo, Interval.from_rational(self.hi).hi)


@dataclass(frozen=True)
class Parameter:
    name: str
    lo: Fraction
    hi: Fraction

    @property
    def fixed(self) -> bool:
        return self.lo == self.hi

    @property
    def bound(self) -> Interval:
        return Interval(Interval.from_rational(self.lo).lo, Interval.from_rational(self.hi).hi)


@dataclass(frozen=True)
class Mode:
    id: int
    flow: tuple  # ((var, Term), ...)
    invariant: Formula = TRUE

    @property
    def rhs(self) -> dict[str, Term]:
        return dict(self.flow)


@dataclass(frozen=True)
class Jump:
    src: int
    dst: int
    guard: Formula
    reset: tuple = ()  # ((var, Term), ...), identity for the rest

    @property
    def reset_map(self) -> dict[str, Term]:
        return dict(self.reset)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str

    def __str__(self):
        return f"{self.code}: {self.message}"


@dataclass(frozen=True)
class HybridAutomaton:
    variables: tuple  # (Variable, ...)
    parameters: tuple  # (Parameter, ...)
    modes: tuple  # (Mode, ...)
    jumps: tuple  # (Jump, ...)
    initial: tuple  # ((mode id, Formula), ...)
    name: str = ""

    @property
    def var_names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def param_names(self) -> list[str]:
        return [p.name for p in self.parameters]

    @property
    def free_params(self) -> list[Parameter]:
        return [p for p in self.parameters if not p.fixed]

    def mode(self, mid: int) -> Mode:
        for m in self.modes:
            if m.id == mid:
                return m
        raise UnknownIdentifier(f"no mode {mid}")

    def param(self, name: str) -> Parameter:
        for p in self.parameters:
            if p.name == name:
                return p
        raise UnknownIdentifier(f"no parameter {name}")

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise UnknownIdentifier(f"no variable {name}")

    def init_of(self, mid: int) -> Formula:
        parts = [f for q, f in self.initial if q == mid]
        if not parts:
            return Or(())
        if len(parts) == 1:
            return parts[0]
        return Or(tuple(parts))

    def init_modes(self) -> list[int]:
        return sorted({q for q, f in self.initial if f != Or(())})

    def successors(self, mid: int) -> list[int]:
        return sorted({j.dst for j in self.jumps if j.src == mid})

    def jumps_between(self, a: int, b: int) -> list[Jump]:
        return [j for j in self.jumps if j.src == a and j.dst == b]

    # -- overrides ---------------------------------------------------------------
    def with_param(self, name: str, lo, hi=None) -> HybridAutomaton:
        hi = lo if hi is None else hi
        lo, hi = Fraction(lo), Fraction(hi)
        if lo > hi:
            raise ModelError(f"empty range for {name}")
        self.param(name)
        params = tuple(replace(p, lo=lo, hi=hi) if p.name == name else p for p in self.parameters)
        return replace(self, parameters=params)

    def with_initial_value(self, name: str, lo, hi=None) -> HybridAutomaton:
        """Replace the initial constraint on a state variable in every init."""
        hi = lo if hi is None else hi
        lo, hi = Fraction(lo), Fraction(hi)
        if lo > hi:
            raise ModelError(f"empty range for {name}")
        self.variable(name)
        x = Var(name)
        new_atoms = conj(ge(x, Const(lo)), le(x, Const(hi)))
        initial = []
        for q, f in self.initial:
            initial.append((q, conj(_drop_var(f, name), new_atoms)))
        return replace(self, initial=tuple(initial))

    def with_overrides(self, overrides: Mapping[str, tuple]) -> HybridAutomaton:
        ha = self
        for name, (lo, hi) in overrides.items():
            if name in ha.param_names:
                ha = ha.with_param(name, lo, hi)
            elif name in ha.var_names:
                ha = ha.with_initial_value(name, lo, hi)
            else:
                raise UnknownIdentifier(f"--set names unknown identifier {name}")
        return ha

    def substitute_fixed(self, t):
        """Replace fixed parameters by their values in a term or formula."""
        from .formula import substitute

        fixed = {p.name: Const(p.lo) for p in self.parameters if p.fixed}
        return substitute(t, fixed) if fixed else t


def _drop_var(f: Formula, name: str) -> Formula:
    if isinstance(f, And):
        kept = [a for a in f.args if not (isinstance(a, Atom) and free_vars(a) == {name})]
        kept = [_drop_var(a, name) if isinstance(a, (And, Or)) else a for a in kept]
        return And(tuple(kept)) if len(kept) != 1 else kept[0]
    if isinstance(f, Atom) and free_vars(f) == {name}:
        return TRUE
    return f


# -- validation ---------------------------------------------------------------------

def validate(ha: HybridAutomaton) -> list[Diagnostic]:
    """Structural checks. An empty list means the automaton is well formed."""
    out: list[Diagnostic] = []
    vars_ = ha.var_names
    params = ha.param_names
    ids = [m.id for m in ha.modes]
    known = set(vars_) | set(params) | {CLOCK}
    for name in sorted(set(vars_) & set(params)):
        out.append(Diagnostic("name-clash", f"parameter {name} clashes with a state variable"))
    if CLOCK in vars_ or CLOCK in params:
        out.append(Diagnostic("name-clash", f"{CLOCK} is reserved for the mode clock"))
    seen = set()
    for v in vars_:
        if v in seen:
            out.append(Diagnostic("duplicate-name", f"variable {v} declared twice"))
        seen.add(v)
    for i in sorted({i for i in ids if ids.count(i) > 1}):
        out.append(Diagnostic("duplicate-mode", f"mode {i} declared twice"))
    for v in ha.variables:
        if v.lo > v.hi:
            out.append(Diagnostic("empty-bound", f"variable {v.name} has an empty bound"))
    for p in ha.parameters:
        if p.lo > p.hi:
            out.append(Diagnostic("empty-bound", f"parameter {p.name} has an empty bound"))
    for m in ha.modes:
        names = [n for n, _ in m.flow]
        for v in vars_:
            c = names.count(v)
            if c == 0:
                out.append(Diagnostic("missing-flow", f"mode {m.id} has no d/dt[{v}]"))
            elif c > 1:
                out.append(Diagnostic("duplicate-flow", f"mode {m.id} defines d/dt[{v}] {c} times"))
        for n, t in m.flow:
            if n not in vars_:
                out.append(Diagnostic("unknown-identifier", f"mode {m.id} defines flow of undeclared {n}"))
            extra = sorted(free_vars(t) - known)
            if extra:
                out.append(Diagnostic("unknown-identifier", f"mode {m.id} flow of {n} uses {extra}"))
            if not is_smooth(t):
                out.append(Diagnostic("non-smooth-flow", f"mode {m.id} flow of {n} uses abs/min/max"))
        extra = sorted(free_vars(m.invariant) - known)
        if extra:
            out.append(Diagnostic("unknown-identifier", f"mode {m.id} invariant uses {extra}"))
    for j in ha.jumps:
        for end in (j.src, j.dst):
            if end not in ids:
                out.append(Diagnostic("unknown-identifier", f"jump {j.src} -> {j.dst} references undeclared mode {end}"))
        names = [n for n, _ in j.reset]
        for n in sorted(set(names)):
            if names.count(n) > 1:
                out.append(Diagnostic("duplicate-reset", f"jump {j.src} -> {j.dst} resets {n} twice"))
            if n not in vars_:
                out.append(Diagnostic("unknown-identifier", f"jump {j.src} -> {j.dst} resets undeclared {n}"))
        extra = sorted((free_vars(j.guard).union(*(free_vars(t) for _, t in j.reset))) - known)
        if extra:
            out.append(Diagnostic("unknown-identifier", f"jump {j.src} -> {j.dst} uses {extra}"))
    if not ha.initial:
        out.append(Diagnostic("no-init", "no initial condition"))
    for q, f in ha.initial:
        if q not in ids:
            out.append(Diagnostic("unknown-identifier", f"init references undeclared mode {q}"))
        extra = sorted(free_vars(f) - (set(vars_) | set(params)))
        if extra:
            out.append(Diagnostic("unknown-identifier", f"init of mode {q} uses {extra}"))
    return out


# -- serialization --------------------------------------------------------------------

_INFIX = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}


def fmt_number(q: Fraction) -> str:
    """Exact decimal if the rational terminates, else ``(p/q)``."""
    q = Fraction(q)
    if q < 0:
        return "-" + fmt_number(-q)
    den = q.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"({q.numerator}/{q.denominator})"
    if q.denominator == 1:
        return str(q.numerator)
    digits = max(twos, fives)
    scaled = q * 10**digits
    s = str(scaled.numerator).rjust(digits + 1, "0")
    return s[:-digits] + "." + s[-digits:]


def fmt_term(t: Term) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Const):
        s = fmt_number(t.value)
        return f"({s})" if t.value < 0 else s
    if t.op in _INFIX:
        sym = f" {_INFIX[t.op]} "
        return "(" + sym.join(fmt_term(a) for a in t.args) + ")"
    if t.op == "neg":
        return f"(-{fmt_term(t.args[0])})"
    return f"{t.op}(" + ", ".join(fmt_term(a) for a in t.args) + ")"


_ZERO_C = Const(Fraction(0))


def _sides(a) -> tuple | None:
    """``(lhs, rhs)`` when an atom reads ``lhs >= rhs`` without slack."""
    if a.slack != 0:
        return None
    t = a.term
    if isinstance(t, App) and t.op == "sub" and t.args[1] != _ZERO_C:
        return t.args
    return t, _ZERO_C


def _is_equality(a, b) -> bool:
    if not (isinstance(a, Atom) and isinstance(b, Atom)) or a.strict or b.strict:
        return False
    sa, sb = _sides(a), _sides(b)
    return sa is not None and sb is not None and sa == sb[::-1]


def fmt_formula(f: Formula) -> str:
    if isinstance(f, Atom):
        rel = ">" if f.strict else ">="
        sides = _sides(f)
        if sides is None:
            return f"{fmt_term(f.term)} {rel} {fmt_number(-f.slack)}"
        lhs, rhs = sides
        if isinstance(lhs, Const) and not isinstance(rhs, Const):
            return f"{fmt_term(rhs)} {rel.replace('>', '<')} {fmt_term(lhs)}"
        return f"{fmt_term(lhs)} {rel} {fmt_term(rhs)}"
    if isinstance(f, And):
        if not f.args:
            return "true"
        parts, i = [], 0
        while i < len(f.args):
            a = f.args[i]
            if i + 1 < len(f.args) and _is_equality(a, f.args[i + 1]):
                lhs, rhs = _sides(a)
                parts.append(f"{fmt_term(lhs)} = {fmt_term(rhs)}")
                i += 2
            else:
                parts.append(fmt_formula(a))
                i += 1
        return "(" + " and ".join(parts) + ")"
    if isinstance(f, Or):
        if not f.args:
            return "false"
        return "(" + " or ".join(fmt_formula(a) for a in f.args) + ")"
    raise ModelError(f"cannot serialize {type(f).__name__}")


def serialize(ha: HybridAutomaton) -> str:
    lines = []
    if ha.name:
        lines.append(f"// {ha.name}")
    for v in ha.variables:
        lines.append(f"var {v.name} in [{fmt_number(v.lo)}, {fmt_number(v.hi)}];")
    for p in ha.parameters:
        if p.fixed:
            lines.append(f"param {p.name} = {fmt_number(p.lo)};")
        else:
            lines.append(f"param {p.name} in [{fmt_number(p.lo)}, {fmt_number(p.hi)}];")
    for m in ha.modes:
        lines.append(f"mode {m.id} {{")
        if m.invariant != TRUE:
            lines.append(f"  inv: {fmt_formula(m.invariant)};")
        for n, t in m.flow:
            lines.append(f"  d/dt[{n}] = {fmt_term(t)};")
        lines.append("}")
    for j in ha.jumps:
        resets = " ".join(f"{n}' = {fmt_term(t)};" for n, t in j.reset)
        lines.append(f"jump {j.src} -> {j.dst} when {fmt_formula(j.guard)} reset {{ {resets} }};")
    for q, f in ha.initial:
        lines.append(f"init mode {q} with {fmt_formula(f)};")
    return "\n".join(lines) + "\n"
