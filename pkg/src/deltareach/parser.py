"""Recursive-descent parser for the model file format.

Grammar (``//`` starts a comment)::

    model   := decl*
    decl    := 'var' ID 'in' '[' num ',' num ']' ';'
             | 'param' ID ('=' num | 'in' '[' num ',' num ']') ';'
             | 'def' ID '=' expr ';'
             | 'mode' INT '{' ('inv' ':' formula ';' | 'd/dt' '[' ID ']' '=' expr ';')* '}'
             | 'jump' INT '->' INT 'when' formula 'reset' '{' (ID "'" '=' expr ';')* '}' ';'
             | 'init' 'mode' INT 'with' formula ';'
    formula := conj (('or' | '||') conj)*
    conj    := neg (('and' | '&&') neg)*
    neg     := ('not' | '!') neg | 'true' | 'false' | '(' formula ')' | expr (rel expr)+
    rel     := '>=' | '>' | '<=' | '<' | '=' | '=='
    expr    := infix arithmetic with + - * / ^ and calls exp log sin cos sqrt tanh abs min max pow
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .formula import (
    FALSE,
    TRUE,
    App,
    Const,
    Formula,
    Term,
    Var,
    conj,
    disj,
    eq,
    ge,
    gt,
    le,
    lt,
    negate,
    substitute,
)
from .model import (
    CLOCK,
    DuplicateMode,
    HybridAutomaton,
    Jump,
    MissingBound,
    Mode,
    ModelSyntaxError,
    Parameter,
    UnknownIdentifier,
    Variable,
)

FUNCS = {"exp": 1, "log": 1, "sin": 1, "cos": 1, "sqrt": 1, "tanh": 1, "abs": 1, "min": 2, "max": 2, "pow": 2}
KEYWORDS = {"var", "param", "def", "mode", "inv", "jump", "when", "reset", "init", "with", "and", "or",
            "not", "true", "false", "in"}

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+|//[^\n]*)
  | (?P<nl>\n)
  | (?P<ddt>d/dt)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>->|>=|<=|==|&&|\|\||[\[\](){};,:=<>+\-*/^'!])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    out = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ModelSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            out.append(Token(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


class Parser:
    def __init__(self, text: str, known: dict | None = None):
        self.toks = tokenize(text)
        self.i = 0
        # name -> 'var' | 'param' | Term (definition) | 'clock'
        self.names: dict = {CLOCK: "clock"}
        if known:
            self.names.update(known)

    # -- token helpers -----------------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        found = tok.text or "end of input"
        raise ModelSyntaxError(f"{msg} (found {found!r})", tok.line, tok.col)

    def at(self, *texts: str) -> bool:
        return self.tok.text in texts and self.tok.kind in ("op", "id", "ddt")

    def eat(self, text: str) -> Token:
        if self.tok.text != text or self.tok.kind == "num":
            self.error(f"expected {text!r}")
        t = self.tok
        self.i += 1
        return t

    def ident(self) -> Token:
        t = self.tok
        if t.kind != "id" or t.text in KEYWORDS:
            self.error("expected identifier")
        self.i += 1
        return t

    def integer(self) -> int:
        t = self.tok
        if t.kind != "num" or not re.fullmatch(r"\d+", t.text):
            self.error("expected integer mode id")
        self.i += 1
        return int(t.text)

    def number(self) -> Fraction:
        t = self.tok
        term = self.expr()
        v = const_value(term)
        if v is None:
            self.error("expected a constant", t)
        return v

    # -- model ---------------------------------------------------------------------
    def model(self, name: str = "") -> HybridAutomaton:
        variables, params, modes, jumps, inits = [], [], [], [], []
        mode_ids: dict[int, Token] = {}
        refs = []
        if self.tok.kind == "eof":
            self.error("empty model")
        while self.tok.kind != "eof":
            kw = self.tok
            if self.at("var"):
                self.i += 1
                n = self.ident()
                self._declare(n, "var")
                if not self.at("in"):
                    raise MissingBound(f"{n.line}:{n.col}: variable {n.text} needs 'in [lo, hi]'")
                self.eat("in")
                lo, hi = self.range_()
                variables.append(Variable(n.text, lo, hi))
                self.eat(";")
            elif self.at("param"):
                self.i += 1
                n = self.ident()
                self._declare(n, "param")
                if self.at("="):
                    self.i += 1
                    v = self.number()
                    params.append(Parameter(n.text, v, v))
                elif self.at("in"):
                    self.i += 1
                    lo, hi = self.range_()
                    params.append(Parameter(n.text, lo, hi))
                else:
                    raise MissingBound(f"{n.line}:{n.col}: parameter {n.text} needs '= value' or 'in [lo, hi]'")
                self.eat(";")
            elif self.at("def"):
                self.i += 1
                n = self.ident()
                self.eat("=")
                body = self.expr()
                self._declare(n, body)
                self.eat(";")
            elif self.at("mode"):
                self.i += 1
                tok = self.tok
                mid = self.integer()
                if mid in mode_ids:
                    raise DuplicateMode(f"{tok.line}:{tok.col}: mode {mid} declared twice")
                mode_ids[mid] = tok
                modes.append(self.mode_body(mid))
            elif self.at("jump"):
                self.i += 1
                st = self.tok
                src = self.integer()
                self.eat("->")
                dt = self.tok
                dst = self.integer()
                refs += [(src, st), (dst, dt)]
                self.eat("when")
                guard = self.formula()
                self.eat("reset")
                self.eat("{")
                resets = []
                while not self.at("}"):
                    v = self.ident()
                    if self.names.get(v.text) != "var":
                        raise UnknownIdentifier(f"{v.line}:{v.col}: reset of unknown variable {v.text}")
                    self.eat("'")
                    self.eat("=")
                    resets.append((v.text, self.expr()))
                    self.eat(";")
                self.eat("}")
                self.eat(";")
                jumps.append(Jump(src, dst, guard, tuple(resets)))
            elif self.at("init"):
                self.i += 1
                self.eat("mode")
                tok = self.tok
                q = self.integer()
                refs.append((q, tok))
                self.eat("with")
                f = self.formula()
                self.eat(";")
                inits.append((q, f))
            else:
                self.error("expected a declaration (var, param, def, mode, jump, init)", kw)
        for q, tok in refs:
            if q not in mode_ids:
                raise UnknownIdentifier(f"{tok.line}:{tok.col}: undeclared mode {q}")
        return HybridAutomaton(tuple(variables), tuple(params), tuple(modes), tuple(jumps), tuple(inits), name)

    def _declare(self, tok: Token, what):
        if tok.text in self.names:
            raise ModelSyntaxError(f"{tok.text} already declared", tok.line, tok.col)
        self.names[tok.text] = what

    def range_(self) -> tuple[Fraction, Fraction]:
        self.eat("[")
        lo = self.number()
        self.eat(",")
        hi = self.number()
        self.eat("]")
        if lo > hi:
            self.error("empty range")
        return lo, hi

    def mode_body(self, mid: int) -> Mode:
        self.eat("{")
        flow = []
        invs = []
        while not self.at("}"):
            if self.at("inv"):
                self.i += 1
                self.eat(":")
                invs.append(self.formula())
                self.eat(";")
            elif self.tok.kind == "ddt":
                self.i += 1
                self.eat("[")
                v = self.ident()
                if self.names.get(v.text) != "var":
                    raise UnknownIdentifier(f"{v.line}:{v.col}: d/dt of unknown variable {v.text}")
                self.eat("]")
                self.eat("=")
                flow.append((v.text, self.expr()))
                self.eat(";")
            else:
                self.error("expected 'inv:' or 'd/dt[...]' in mode body")
        self.eat("}")
        inv = conj(*invs) if invs else TRUE
        return Mode(mid, tuple(flow), inv)

    # -- formulas ------------------------------------------------------------------
    def formula(self) -> Formula:
        parts = [self.conjunction()]
        while self.at("or", "||"):
            self.i += 1
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else disj(*parts)

    def conjunction(self) -> Formula:
        parts = [self.negation()]
        while self.at("and", "&&"):
            self.i += 1
            parts.append(self.negation())
        return parts[0] if len(parts) == 1 else conj(*parts)

    def negation(self) -> Formula:
        if self.at("not", "!"):
            self.i += 1
            return negate(self.negation())
        if self.at("true"):
            self.i += 1
            return TRUE
        if self.at("false"):
            self.i += 1
            return FALSE
        if self.at("("):
            save = self.i
            try:
                return self.comparison()
            except ModelSyntaxError:
                self.i = save
            self.eat("(")
            f = self.formula()
            self.eat(")")
            return f
        return self.comparison()

    def comparison(self) -> Formula:
        left = self.expr()
        rels = []
        while self.at(">=", ">", "<=", "<", "=", "=="):
            op = self.tok.text
            self.i += 1
            right = self.expr()
            rels.append(_REL[op](left, right))
            left = right
        if not rels:
            self.error("expected a comparison operator")
        return rels[0] if len(rels) == 1 else conj(*rels)

    # -- expressions -----------------------------------------------------------------
    def expr(self) -> Term:
        left = self.product()
        chain = False  # left is an add built by this loop, safe to extend
        while self.at("+", "-"):
            plus = self.tok.text == "+"
            self.i += 1
            right = self.product()
            if plus and chain:
                left = App("add", left.args + (right,))
            else:
                left = App("add" if plus else "sub", (left, right))
            chain = plus
        return left

    def product(self) -> Term:
        left = self.unary()
        chain = False
        while self.at("*", "/"):
            op = self.tok.text
            self.i += 1
            right = self.unary()
            if op == "/" and isinstance(left, Const) and isinstance(right, Const) and right.value != 0:
                left = Const(left.value / right.value)
                chain = False
            elif op == "*" and chain:
                left = App("mul", left.args + (right,))
            else:
                left = App("mul" if op == "*" else "div", (left, right))
                chain = op == "*"
        return left

    def unary(self) -> Term:
        if self.at("-"):
            self.i += 1
            inner = self.unary()
            if isinstance(inner, Const):
                return Const(-inner.value)
            return App("neg", (inner,))
        if self.at("+"):
            self.i += 1
            return self.unary()
        return self.power()

    def power(self) -> Term:
        base = self.primary()
        if self.at("^"):
            self.i += 1
            return App("pow", (base, self.unary()))
        return base

    def primary(self) -> Term:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Const(Fraction(t.text))
        if self.at("("):
            self.i += 1
            e = self.expr()
            self.eat(")")
            return e
        if t.kind == "id" and t.text not in KEYWORDS:
            self.i += 1
            if t.text in FUNCS and self.at("("):
                self.i += 1
                args = [self.expr()]
                while self.at(","):
                    self.i += 1
                    args.append(self.expr())
                self.eat(")")
                if len(args) != FUNCS[t.text]:
                    self.error(f"{t.text} takes {FUNCS[t.text]} argument(s)", t)
                return App(t.text, tuple(args))
            what = self.names.get(t.text)
            if what is None:
                raise UnknownIdentifier(f"{t.line}:{t.col}: unknown identifier {t.text}")
            if isinstance(what, Term):
                return what
            return Var(t.text)
        self.error("expected an expression")


_REL = {">=": ge, ">": gt, "<=": le, "<": lt, "=": eq, "==": eq}


def const_value(t: Term) -> Fraction | None:
    """Exact value of a variable-free rational term, else None."""
    if isinstance(t, Const):
        return t.value
    if isinstance(t, Var):
        return None
    vals = [const_value(a) for a in t.args]
    if any(v is None for v in vals):
        return None
    op = t.op
    try:
        if op == "add":
            return sum(vals, Fraction(0))
        if op == "sub":
            return vals[0] - vals[1]
        if op == "mul":
            out = Fraction(1)
            for v in vals:
                out *= v
            return out
        if op == "div":
            return vals[0] / vals[1]
        if op == "neg":
            return -vals[0]
        if op == "pow" and vals[1].denominator == 1:
            return vals[0] ** int(vals[1])
    except ZeroDivisionError:
        return None
    return None


def parse_model(text: str, name: str = "") -> HybridAutomaton:
    """Parse model text into an automaton (see module docstring for the grammar)."""
    return Parser(text).model(name)


def parse_formula(text: str, ha: HybridAutomaton | None = None, names=()) -> Formula:
    """Parse a standalone formula over the names of ``ha`` plus ``names``."""
    known = {v: "var" for v in names}
    if ha is not None:
        known.update({v: "var" for v in ha.var_names})
        known.update({p: "param" for p in ha.param_names})
    p = Parser(text, known)
    f = p.formula()
    if p.tok.kind != "eof":
        p.error("trailing input")
    return f


def load_model(path) -> HybridAutomaton:
    from pathlib import Path

    p = Path(path)
    return parse_model(p.read_text(encoding="utf-8"), p.stem)
