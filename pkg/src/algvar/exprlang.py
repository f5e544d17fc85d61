"""Parser and evaluator for the scalar-field expression language.

Grammar, lowest to highest precedence::

    additive       :=  multiplicative (('+' | '-') multiplicative)*
    multiplicative :=  unary (('*' | '/') unary)*
    unary          :=  '-' unary | power
    power          :=  atom ('^' exponent)?        # right-associative
    exponent       :=  '-'? NUMBER ('^' exponent)?
    atom           :=  NUMBER | VARIABLE | FUNC '(' additive ')' | '(' additive ')'

Whitespace is insignificant; numbers are decimals with optional fraction and
exponent; the functions are sin, cos, exp, log, sqrt.  Exponents of ``^`` are
literal numbers, so jets stay exact without log-based rewrites.

Expression trees are immutable, shareable and evaluable to second-order jets;
they can also be differentiated and substituted symbolically, printed back to
source, and rebuilt through the folding constructors ``eadd``/``emul``/... .
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .fields import Env, Field
from .jets import (
    EvalContext,
    EvaluationError,
    Jet2,
    constant_jet,
    jet_add,
    jet_div,
    jet_mul,
    jet_pow,
    jet_sub,
    jet_unary,
)

__all__ = [
    "Bin",
    "Call",
    "Expr",
    "Neg",
    "Num",
    "ParseError",
    "Pow",
    "Var",
    "differentiate",
    "eadd",
    "ecall",
    "ediv",
    "emul",
    "eneg",
    "epow",
    "esub",
    "evaluate",
    "free_vars",
    "parse",
    "substitute",
    "to_source",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")


class ParseError(ValueError):
    """Malformed expression source, with byte offset and a line excerpt."""

    def __init__(self, source: str, offset: int, expected: str):
        self.offset = offset
        self.expected = expected
        start = source.rfind("\n", 0, offset) + 1
        end = source.find("\n", offset)
        if end < 0:
            end = len(source)
        self.excerpt = source[start:end]
        col = offset - start
        super().__init__(
            f"parse error at offset {offset}: expected {expected}\n"
            f"  {self.excerpt}\n  {' ' * col}^"
        )


class Expr(Field):
    """A node of a parsed (or constructed) expression tree."""

    __slots__ = ()


@dataclass(frozen=True)
class Num(Expr):
    value: float

    def _jet(self, env: Env) -> Jet2:
        return constant_jet(self.value, env.d)


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def _jet(self, env: Env) -> Jet2:
        return env.lookup(self.name)


@dataclass(frozen=True)
class Bin(Expr):
    op: str  # one of + - * /
    left: Expr
    right: Expr

    def _jet(self, env: Env) -> Jet2:
        a = self.left.jet(env)
        b = self.right.jet(env)
        if self.op == "+":
            return jet_add(a, b)
        if self.op == "-":
            return jet_sub(a, b)
        if self.op == "*":
            return jet_mul(a, b)
        return jet_div(a, b)


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: float

    def _jet(self, env: Env) -> Jet2:
        return jet_pow(self.base.jet(env), self.exponent)


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr

    def _jet(self, env: Env) -> Jet2:
        return jet_unary("neg", self.arg.jet(env))


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr

    def _jet(self, env: Env) -> Jet2:
        return jet_unary(self.func, self.arg.jet(env))


# ---------------------------------------------------------------------------
# folding constructors


def eadd(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if isinstance(a, Num) and a.value == 0.0:
        return b
    if isinstance(b, Num) and b.value == 0.0:
        return a
    return Bin("+", a, b)


def esub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if isinstance(b, Num) and b.value == 0.0:
        return a
    if isinstance(a, Num) and a.value == 0.0:
        return eneg(b)
    return Bin("-", a, b)


def emul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if (isinstance(a, Num) and a.value == 0.0) or (isinstance(b, Num) and b.value == 0.0):
        return Num(0.0)
    if isinstance(a, Num) and a.value == 1.0:
        return b
    if isinstance(b, Num) and b.value == 1.0:
        return a
    return Bin("*", a, b)


def ediv(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Num) and b.value == 1.0:
        return a
    if isinstance(a, Num) and a.value == 0.0:
        return Num(0.0)
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return Num(a.value / b.value)
    return Bin("/", a, b)


def eneg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def epow(a: Expr, exponent: float) -> Expr:
    if exponent == 0.0:
        return Num(1.0)
    if exponent == 1.0:
        return a
    if isinstance(a, Num):
        try:
            return Num(a.value**exponent)
        except (ValueError, OverflowError, ZeroDivisionError):
            pass
    return Pow(a, float(exponent))


_FOLD = {"sin": math.sin, "cos": math.cos, "exp": math.exp, "log": math.log, "sqrt": math.sqrt}


def ecall(func: str, a: Expr) -> Expr:
    if func not in FUNCTIONS:
        raise ValueError(f"unknown function '{func}'")
    if isinstance(a, Num):
        try:
            return Num(_FOLD[func](a.value))
        except ValueError:
            pass
    return Call(func, a)


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == m.start():
            stripped = source[pos:].lstrip()
            if not stripped:
                break
            bad = len(source) - len(stripped)
            raise ParseError(source, bad, "a number, name, operator or parenthesis")
        if m.group("num") is not None:
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.group("ident") is not None:
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("eof", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def current(self):
        return self.tokens[self.i]

    def _fail(self, expected: str):
        raise ParseError(self.source, self.current[2], expected)

    def _accept_op(self, *ops: str) -> str | None:
        kind, text, _ = self.current
        if kind == "op" and text in ops:
            self.i += 1
            return text
        return None

    def parse(self) -> Expr:
        expr = self.additive()
        if self.current[0] != "eof":
            self._fail("end of expression or an operator")
        return expr

    def additive(self) -> Expr:
        expr = self.multiplicative()
        while (op := self._accept_op("+", "-")) is not None:
            rhs = self.multiplicative()
            expr = eadd(expr, rhs) if op == "+" else esub(expr, rhs)
        return expr

    def multiplicative(self) -> Expr:
        expr = self.unary()
        while (op := self._accept_op("*", "/")) is not None:
            rhs = self.unary()
            expr = emul(expr, rhs) if op == "*" else ediv(expr, rhs)
        return expr

    def unary(self) -> Expr:
        if self._accept_op("-"):
            return eneg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self._accept_op("^"):
            return epow(base, self.exponent())
        return base

    def exponent(self) -> float:
        sign = -1.0 if self._accept_op("-") else 1.0
        kind, text, _ = self.current
        if kind != "num":
            self._fail("a literal number as exponent")
        self.i += 1
        value = sign * float(text)
        if self._accept_op("^"):
            value = value ** self.exponent()
        return value

    def atom(self) -> Expr:
        kind, text, offset = self.current
        if kind == "num":
            self.i += 1
            return Num(float(text))
        if kind == "ident":
            self.i += 1
            if text in FUNCTIONS:
                if not self._accept_op("("):
                    self._fail(f"'(' after function '{text}'")
                arg = self.additive()
                if not self._accept_op(")"):
                    self._fail("')'")
                return ecall(text, arg)
            if self.current[0] == "op" and self.current[1] == "(":
                raise ParseError(self.source, offset, "a known function name")
            return Var(text)
        if self._accept_op("("):
            expr = self.additive()
            if not self._accept_op(")"):
                self._fail("')'")
            return expr
        self._fail("a number, variable, function call or '('")


def parse(source: str) -> Expr:
    """Parse expression source text; raises :class:`ParseError` on bad input."""
    return _Parser(source).parse()


def evaluate(expr: Expr, ctx: EvalContext) -> Jet2:
    """Evaluate a (parsed or constructed) expression to a jet at the context."""
    return expr.jet(Env.from_context(ctx))


def free_vars(expr: Expr) -> frozenset[str]:
    if isinstance(expr, Var):
        return frozenset((expr.name,))
    if isinstance(expr, Bin):
        return free_vars(expr.left) | free_vars(expr.right)
    if isinstance(expr, (Neg, Call)):
        return free_vars(expr.arg)
    if isinstance(expr, Pow):
        return free_vars(expr.base)
    return frozenset()


# ---------------------------------------------------------------------------
# symbolic operations

_ZERO = Num(0.0)
_ONE = Num(1.0)


def differentiate(expr: Expr, var: str) -> Expr:
    """Exact symbolic partial derivative with respect to a variable name."""
    if isinstance(expr, Num):
        return _ZERO
    if isinstance(expr, Var):
        return _ONE if expr.name == var else _ZERO
    if isinstance(expr, Neg):
        return eneg(differentiate(expr.arg, var))
    if isinstance(expr, Pow):
        da = differentiate(expr.base, var)
        return emul(emul(Num(expr.exponent), epow(expr.base, expr.exponent - 1.0)), da)
    if isinstance(expr, Call):
        da = differentiate(expr.arg, var)
        a = expr.arg
        if expr.func == "sin":
            return emul(ecall("cos", a), da)
        if expr.func == "cos":
            return eneg(emul(ecall("sin", a), da))
        if expr.func == "exp":
            return emul(ecall("exp", a), da)
        if expr.func == "log":
            return ediv(da, a)
        return ediv(da, emul(Num(2.0), ecall("sqrt", a)))
    if isinstance(expr, Bin):
        da = differentiate(expr.left, var)
        db = differentiate(expr.right, var)
        if expr.op == "+":
            return eadd(da, db)
        if expr.op == "-":
            return esub(da, db)
        if expr.op == "*":
            return eadd(emul(da, expr.right), emul(expr.left, db))
        return ediv(
            esub(emul(da, expr.right), emul(expr.left, db)),
            emul(expr.right, expr.right),
        )
    raise TypeError(f"cannot differentiate {expr!r}")


def substitute(expr: Expr, mapping: dict[str, Expr]) -> Expr:
    """Replace variables by expressions, rebuilding through the folders."""
    if isinstance(expr, Var):
        return mapping.get(expr.name, expr)
    if isinstance(expr, Num):
        return expr
    if isinstance(expr, Neg):
        return eneg(substitute(expr.arg, mapping))
    if isinstance(expr, Pow):
        return epow(substitute(expr.base, mapping), expr.exponent)
    if isinstance(expr, Call):
        return ecall(expr.func, substitute(expr.arg, mapping))
    if isinstance(expr, Bin):
        left = substitute(expr.left, mapping)
        right = substitute(expr.right, mapping)
        if expr.op == "+":
            return eadd(left, right)
        if expr.op == "-":
            return esub(left, right)
        if expr.op == "*":
            return emul(left, right)
        return ediv(left, right)
    raise TypeError(f"cannot substitute into {expr!r}")


# printing precedence levels
_ADD, _MUL, _UNARY, _POW, _ATOM = 1, 2, 3, 4, 5


def _level(expr: Expr) -> int:
    if isinstance(expr, Bin):
        return _ADD if expr.op in "+-" else _MUL
    if isinstance(expr, Neg):
        return _UNARY
    if isinstance(expr, Pow):
        return _POW
    if isinstance(expr, Num) and expr.value < 0.0:
        return _UNARY
    return _ATOM


def _wrap(expr: Expr, minimum: int) -> str:
    text = to_source(expr)
    return f"({text})" if _level(expr) < minimum else text


def _num_repr(value: float) -> str:
    return repr(float(value))


def to_source(expr: Expr) -> str:
    """Canonical printer; ``parse(to_source(parse(s)))`` equals ``parse(s)``."""
    if isinstance(expr, Num):
        return _num_repr(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Neg):
        return "-" + _wrap(expr.arg, _UNARY)
    if isinstance(expr, Pow):
        exp = _num_repr(expr.exponent)
        return f"{_wrap(expr.base, _ATOM)}^{exp}"
    if isinstance(expr, Call):
        return f"{expr.func}({to_source(expr.arg)})"
    if isinstance(expr, Bin):
        # right operands are wrapped one level tighter so the left-associative
        # reparse rebuilds the identical tree
        if expr.op == "+":
            return f"{_wrap(expr.left, _ADD)} + {_wrap(expr.right, _ADD + 1)}"
        if expr.op == "-":
            return f"{_wrap(expr.left, _ADD)} - {_wrap(expr.right, _ADD + 1)}"
        if expr.op == "*":
            return f"{_wrap(expr.left, _MUL)}*{_wrap(expr.right, _MUL + 1)}"
        return f"{_wrap(expr.left, _MUL)}/{_wrap(expr.right, _MUL + 1)}"
    raise TypeError(f"cannot print {expr!r}")
