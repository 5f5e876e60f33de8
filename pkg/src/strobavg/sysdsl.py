"""Parsing and evaluation of periodic vector-field families.

A system file is a YAML document declaring a name, the state dimension, the
period (a constant expression), the truncation order in the perturbation
size, and one vector of component expressions per perturbation power.  The
expression grammar is deliberately small: +, -, *, division by constants,
non-negative integer powers, sin/cos/exp, pi, the time variable t and the
state variables x1..xn.  Expressions evaluate over any algebra that supports
those operations, which is what lets one ODE description drive plain-number
integration, jet propagation and graded-series propagation alike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np
import yaml

__all__ = [
    "ParseError",
    "EvalError",
    "Num",
    "Pi",
    "TimeVar",
    "StateVar",
    "Unary",
    "BinOp",
    "Pow",
    "ExprAst",
    "parse_expression",
    "expr_to_str",
    "eval_ast",
    "SystemSpec",
    "parse_system",
    "parse_system_file",
    "PeriodicityReport",
    "check_periodicity",
]


class ParseError(ValueError):
    """Malformed system document or expression; carries line/column context."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        where = ""
        if line is not None:
            where = f" (line {line}, col {col})" if col is not None else f" (line {line})"
        super().__init__(message + where)


class EvalError(ValueError):
    """Expression evaluation failed (division by a zero constant)."""


# -- AST ----------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Pi:
    pass


@dataclass(frozen=True)
class TimeVar:
    pass


@dataclass(frozen=True)
class StateVar:
    index: int  # zero-based


@dataclass(frozen=True)
class Unary:
    fn: str  # sin | cos | exp | neg
    arg: "ExprAst"


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * /
    left: "ExprAst"
    right: "ExprAst"


@dataclass(frozen=True)
class Pow:
    base: "ExprAst"
    exponent: int  # non-negative integer, fixed at parse time


ExprAst = Union[Num, Pi, TimeVar, StateVar, Unary, BinOp, Pow]

_FUNCTIONS = ("sin", "cos", "exp")


# -- tokenizer ------------------------------------------------------------------


@dataclass(frozen=True)
class _Token:
    kind: str  # num | ident | op | lparen | rparen | comma | end
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        start_col = col
        if ch.isdigit() or (ch == "." and i + 1 < len(text) and text[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < len(text) and (text[j].isdigit() or (text[j] == "." and not seen_dot)):
                seen_dot = seen_dot or text[j] == "."
                j += 1
            # exponent part
            if j < len(text) and text[j] in "eE":
                k = j + 1
                if k < len(text) and text[k] in "+-":
                    k += 1
                if k < len(text) and text[k].isdigit():
                    while k < len(text) and text[k].isdigit():
                        k += 1
                    j = k
            tokens.append(_Token("num", text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("ident", text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if ch in "+-*/^":
            tokens.append(_Token("op", ch, line, start_col))
        elif ch == "(":
            tokens.append(_Token("lparen", ch, line, start_col))
        elif ch == ")":
            tokens.append(_Token("rparen", ch, line, start_col))
        elif ch == ",":
            tokens.append(_Token("comma", ch, line, start_col))
        else:
            raise ParseError(f"unexpected character {ch!r}", line, start_col)
        i += 1
        col += 1
    tokens.append(_Token("end", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str, dim: int):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.dim = dim

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, message: str, tok: _Token | None = None):
        tok = tok or self.peek()
        raise ParseError(message, tok.line, tok.col)

    def parse(self) -> ExprAst:
        e = self.expr()
        if self.peek().kind != "end":
            self.fail(f"unexpected trailing input {self.peek().text!r}")
        return e

    def expr(self) -> ExprAst:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> ExprAst:
        node = self.factor()
        while self.peek().kind == "op" and self.peek().text in "*/":
            tok = self.advance()
            rhs = self.factor()
            if tok.text == "/" and not _is_constant(rhs):
                self.fail("division is only allowed by constant expressions", tok)
            node = BinOp(tok.text, node, rhs)
        return node

    def factor(self) -> ExprAst:
        # unary minus binds looser than ^, so -x1^2 means -(x1^2)
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return Unary("neg", self.factor())
        if tok.kind == "op" and tok.text == "+":
            self.advance()
            return self.factor()
        return self.power()

    def power(self) -> ExprAst:
        base = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            tok = self.advance()
            exp_tok = self.peek()
            if exp_tok.kind != "num":
                self.fail("power must be a non-negative integer literal", tok)
            self.advance()
            try:
                exponent = int(exp_tok.text)
            except ValueError:
                self.fail("power must be a non-negative integer literal", exp_tok)
            return Pow(base, exponent)
        return base

    def atom(self) -> ExprAst:
        tok = self.advance()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "lparen":
            e = self.expr()
            if self.peek().kind != "rparen":
                self.fail("expected ')'")
            self.advance()
            return e
        if tok.kind == "ident":
            name = tok.text
            if name in _FUNCTIONS:
                if self.peek().kind != "lparen":
                    self.fail(f"{name} requires parenthesized argument", tok)
                self.advance()
                arg = self.expr()
                if self.peek().kind == "comma":
                    self.fail(f"{name} takes exactly one argument", self.peek())
                if self.peek().kind != "rparen":
                    self.fail("expected ')'")
                self.advance()
                return Unary(name, arg)
            if name == "pi":
                return Pi()
            if name == "t":
                return TimeVar()
            if name.startswith("x") and name[1:].isdigit():
                idx = int(name[1:])
                if not 1 <= idx <= self.dim:
                    self.fail(
                        f"state variable {name} out of range for dimension {self.dim}", tok
                    )
                return StateVar(idx - 1)
            self.fail(f"unknown identifier {name!r}", tok)
        self.fail(f"unexpected token {tok.text!r}", tok)


def _is_constant(e: ExprAst) -> bool:
    if isinstance(e, (Num, Pi)):
        return True
    if isinstance(e, (TimeVar, StateVar)):
        return False
    if isinstance(e, Unary):
        return _is_constant(e.arg)
    if isinstance(e, BinOp):
        return _is_constant(e.left) and _is_constant(e.right)
    if isinstance(e, Pow):
        return _is_constant(e.base)
    raise TypeError(f"not an expression node: {e!r}")


def parse_expression(text: str, dim: int) -> ExprAst:
    """Parse one component expression for a system of the given dimension."""
    return _Parser(text, dim).parse()


def expr_to_str(e: ExprAst) -> str:
    """Render an AST back to the surface syntax (canonical parenthesization)."""
    return _render(e, 0)


_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


def _render(e: ExprAst, parent_prec: int) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Pi):
        return "pi"
    if isinstance(e, TimeVar):
        return "t"
    if isinstance(e, StateVar):
        return f"x{e.index + 1}"
    if isinstance(e, Unary):
        if e.fn == "neg":
            inner = _render(e.arg, 3)
            text = f"-{inner}"
            return f"({text})" if parent_prec >= 2 else text
        return f"{e.fn}({_render(e.arg, 0)})"
    if isinstance(e, Pow):
        base = _render(e.base, 4)
        return f"{base}^{e.exponent}"
    if isinstance(e, BinOp):
        prec = _PRECEDENCE[e.op]
        left = _render(e.left, prec - 1)
        right = _render(e.right, prec)
        text = f"{left} {e.op} {right}"
        return f"({text})" if prec <= parent_prec else text
    raise TypeError(f"not an expression node: {e!r}")


# -- evaluation -----------------------------------------------------------------


def _apply_unary(fn: str, value):
    if isinstance(value, (int, float)):
        return getattr(math, fn)(float(value))
    return getattr(value, fn)()


def eval_ast(e: ExprAst, t: float, x: Sequence):
    """Evaluate an expression at time t over a vector of algebra elements.

    The elements of x only need +, -, * (with numbers and among themselves),
    integer powers and, where the expression uses them, sin/cos/exp methods.
    Plain floats work as the degenerate algebra.
    """
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Pi):
        return math.pi
    if isinstance(e, TimeVar):
        return t
    if isinstance(e, StateVar):
        if e.index >= len(x):
            raise EvalError(f"state vector too short for x{e.index + 1}")
        return x[e.index]
    if isinstance(e, Unary):
        v = eval_ast(e.arg, t, x)
        if e.fn == "neg":
            return -v
        return _apply_unary(e.fn, v)
    if isinstance(e, Pow):
        return eval_ast(e.base, t, x) ** e.exponent
    if isinstance(e, BinOp):
        left = eval_ast(e.left, t, x)
        right = eval_ast(e.right, t, x)
        if e.op == "+":
            return left + right
        if e.op == "-":
            return left - right
        if e.op == "*":
            return left * right
        # division: the parser guarantees a constant denominator, hence a float
        denom = float(right)
        if denom == 0.0:
            raise EvalError("division by zero constant")
        return left * (1.0 / denom)
    raise TypeError(f"not an expression node: {e!r}")


# -- system documents -------------------------------------------------------------


@dataclass(frozen=True)
class SystemSpec:
    """A parsed periodic vector-field family."""

    name: str
    dim: int
    period: float
    order: int
    fields: Mapping[int, tuple[ExprAst, ...]]
    source: Mapping[int, tuple[str, ...]] = field(default_factory=dict, compare=False)
    period_source: str = field(default="", compare=False)

    def field_components(self, i: int) -> tuple[ExprAst, ...] | None:
        return self.fields.get(i)


def parse_system(text: str) -> SystemSpec:
    """Parse a YAML system document; see the repository docs for the grammar."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise ParseError(f"invalid document: {exc}", mark.line + 1, mark.column + 1)
        raise ParseError(f"invalid document: {exc}")
    if not isinstance(doc, dict):
        raise ParseError("system document must be a mapping")

    missing = [k for k in ("name", "dim", "period", "order", "fields") if k not in doc]
    if missing:
        raise ParseError(f"missing required keys: {', '.join(missing)}")
    extra = [k for k in doc if k not in ("name", "dim", "period", "order", "fields")]
    if extra:
        raise ParseError(f"unknown keys: {', '.join(sorted(extra))}")

    name = str(doc["name"])
    dim = _require_int(doc["dim"], "dim")
    if dim < 1:
        raise ParseError("dim must be >= 1")
    order = _require_int(doc["order"], "order")
    if order < 1:
        raise ParseError("order must be >= 1")

    period_src = str(doc["period"])
    period_ast = _parse_component(period_src, dim, "period")
    if not _is_constant(period_ast):
        raise ParseError("period must be a constant expression")
    period = float(eval_ast(period_ast, 0.0, []))
    if not (period > 0.0 and math.isfinite(period)):
        raise ParseError(f"period must be positive and finite, got {period}")

    raw_fields = doc["fields"]
    if not isinstance(raw_fields, dict) or not raw_fields:
        raise ParseError("fields must be a non-empty mapping of powers to component lists")
    fields: dict[int, tuple[ExprAst, ...]] = {}
    source: dict[int, tuple[str, ...]] = {}
    for key, comps in raw_fields.items():
        try:
            power = int(key)
        except (TypeError, ValueError):
            raise ParseError(f"field key {key!r} is not an integer power")
        if not 1 <= power <= order:
            raise ParseError(f"field power {power} outside 1..{order}")
        if not isinstance(comps, (list, tuple)) or len(comps) != dim:
            raise ParseError(
                f"field {power} must list exactly {dim} component expression(s)"
            )
        parsed = tuple(
            _parse_component(str(c), dim, f"fields[{power}][{idx + 1}]")
            for idx, c in enumerate(comps)
        )
        fields[power] = parsed
        source[power] = tuple(str(c) for c in comps)
    return SystemSpec(
        name=name,
        dim=dim,
        period=period,
        order=order,
        fields=fields,
        source=source,
        period_source=period_src,
    )


def _require_int(value, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{key} must be an integer, got {value!r}")
    return value


def _parse_component(text: str, dim: int, where: str) -> ExprAst:
    try:
        return parse_expression(text, dim)
    except ParseError as exc:
        raise ParseError(f"{where}: {exc}") from exc


def parse_system_file(path) -> SystemSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_system(fh.read())


# -- periodicity check -------------------------------------------------------------


@dataclass(frozen=True)
class PeriodicityViolation:
    power: int
    component: int
    point: tuple[float, ...]
    residual: float


@dataclass(frozen=True)
class PeriodicityReport:
    ok: bool
    samples: int
    tol: float
    violations: tuple[PeriodicityViolation, ...]
    max_residual: float


def check_periodicity(
    s: SystemSpec, samples: int = 32, tol: float = 1e-9, seed: int = 0
) -> PeriodicityReport:
    """Statistically check F_i(0, x) == F_i(T, x) at random points.

    Violations are reported, never raised; callers decide how strict to be.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    violations: list[PeriodicityViolation] = []
    worst = 0.0
    for _ in range(samples):
        point = rng.uniform(-1.0, 1.0, size=s.dim)
        xs = list(point)
        for power, comps in sorted(s.fields.items()):
            for c, e in enumerate(comps):
                v0 = eval_ast(e, 0.0, xs)
                vT = eval_ast(e, s.period, xs)
                residual = abs(v0 - vT)
                bound = tol * (1.0 + abs(v0))
                worst = max(worst, residual)
                if residual > bound:
                    violations.append(
                        PeriodicityViolation(power, c, tuple(point), residual)
                    )
    return PeriodicityReport(
        ok=not violations,
        samples=samples,
        tol=tol,
        violations=tuple(violations),
        max_residual=worst,
    )
