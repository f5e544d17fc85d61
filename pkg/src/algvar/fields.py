"""Scalar fields evaluable to second-order jets.

A field is anything with a ``_jet(env)`` method returning a :class:`Jet2`.
Parsed expressions (module :mod:`algvar.exprlang`) are fields; so are the
derived quantities built here by combinators.  Evaluation happens against an
:class:`Env`, which binds variable names to jets and memoizes every field
node once per point, so shared subtrees are evaluated once.

The :func:`partial` factory is the one place where exactness bookkeeping
lives: the partial derivative of a symbolic expression is again a symbolic
expression (exact to all orders), while the partial of an opaque jet-backed
field is a :class:`PartialField`, whose value and gradient are exact (they
come from the parent's gradient and Hessian) but whose own Hessian is
truncated to zero.  Nothing in this package reads the Hessian of a derived
field two derivative levels up from its data.
"""

from __future__ import annotations

import numpy as np

from .jets import (
    EvalContext,
    EvaluationError,
    Jet2,
    jet_add,
    jet_mul,
    jet_sub,
    jet_unary,
    seed,
)

__all__ = [
    "ComposeField",
    "Env",
    "Field",
    "PartialField",
    "UnboundVariableError",
    "env_at",
    "fadd",
    "fconst",
    "fdot",
    "field_jet",
    "fmul",
    "fneg",
    "fsub",
    "fsum",
    "partial",
]


class UnboundVariableError(EvaluationError):
    def __init__(self, name: str):
        self.name = name
        super().__init__("var", f"unbound variable '{name}'")


class Env:
    """Variable bindings plus a per-point memo table for field nodes."""

    __slots__ = ("d", "bindings", "_memo")

    def __init__(self, d: int, bindings: dict[str, Jet2]):
        self.d = d
        self.bindings = bindings
        self._memo: dict[int, tuple[object, Jet2]] = {}

    def lookup(self, name: str) -> Jet2:
        try:
            return self.bindings[name]
        except KeyError:
            raise UnboundVariableError(name) from None

    @staticmethod
    def from_context(ctx: EvalContext) -> "Env":
        return Env(ctx.d, {name: seed(ctx, i) for i, name in enumerate(ctx.names)})


def env_at(names: tuple[str, ...], point) -> Env:
    return Env.from_context(EvalContext(tuple(names), np.asarray(point, dtype=float)))


class Field:
    """Base class for jet-evaluable scalar fields."""

    def jet(self, env: Env) -> Jet2:
        memo = env._memo
        key = id(self)
        hit = memo.get(key)
        if hit is not None and hit[0] is self:
            return hit[1]
        result = self._jet(env)
        memo[key] = (self, result)
        return result

    def _jet(self, env: Env) -> Jet2:  # pragma: no cover - abstract
        raise NotImplementedError

    def __add__(self, other):
        return fadd(self, other)

    def __sub__(self, other):
        return fsub(self, other)

    def __mul__(self, other):
        return fmul(self, other)

    def __neg__(self):
        return fneg(self)


def field_jet(field: Field, ctx: EvalContext) -> Jet2:
    return field.jet(Env.from_context(ctx))


class SumField(Field):
    __slots__ = ("terms",)

    def __init__(self, terms: tuple[Field, ...]):
        self.terms = terms

    def _jet(self, env: Env) -> Jet2:
        acc = self.terms[0].jet(env)
        for t in self.terms[1:]:
            acc = jet_add(acc, t.jet(env))
        return acc


class DiffField(Field):
    __slots__ = ("left", "right")

    def __init__(self, left: Field, right: Field):
        self.left = left
        self.right = right

    def _jet(self, env: Env) -> Jet2:
        return jet_sub(self.left.jet(env), self.right.jet(env))


class ProdField(Field):
    __slots__ = ("left", "right")

    def __init__(self, left: Field, right: Field):
        self.left = left
        self.right = right

    def _jet(self, env: Env) -> Jet2:
        return jet_mul(self.left.jet(env), self.right.jet(env))


class NegField(Field):
    __slots__ = ("arg",)

    def __init__(self, arg: Field):
        self.arg = arg

    def _jet(self, env: Env) -> Jet2:
        return jet_unary("neg", self.arg.jet(env))


class PartialField(Field):
    """∂(parent)/∂(var) for an opaque jet-backed parent.

    Value and gradient are rows of the parent's gradient and Hessian, hence
    exact; the Hessian would need third derivatives of the parent and is
    truncated to zero.  Consumers only ever read value and gradient of these.
    """

    __slots__ = ("parent", "var")

    def __init__(self, parent: Field, var: str):
        self.parent = parent
        self.var = var

    def _jet(self, env: Env) -> Jet2:
        pj = self.parent.jet(env)
        var_jet = env.lookup(self.var)
        k = int(np.argmax(var_jet.grad))
        if var_jet.grad[k] != 1.0 or np.count_nonzero(var_jet.grad) != 1:
            raise EvaluationError(
                "partial", f"variable '{self.var}' is not seeded in this context"
            )
        d = env.d
        return Jet2(float(pj.grad[k]), pj.hess[k].copy(), np.zeros((d, d)))


class ComposeField(Field):
    """outer(bindings) with the chain rule carried by jet arithmetic.

    The inner fields are evaluated in the caller's environment; their jets
    (which live in the caller's variable space) are then bound to the outer
    field's variable names.  Evaluating the outer field on those jets is
    exactly the second-order chain rule.
    """

    __slots__ = ("outer", "bindings")

    def __init__(self, outer: Field, bindings: dict[str, Field]):
        self.outer = outer
        self.bindings = bindings

    def _jet(self, env: Env) -> Jet2:
        inner = {name: f.jet(env) for name, f in self.bindings.items()}
        return self.outer.jet(Env(env.d, inner))


def _as_field(x) -> Field:
    if isinstance(x, Field):
        return x
    if isinstance(x, (int, float)):
        return fconst(x)
    raise TypeError(f"not a field: {x!r}")


def _is_const(f: Field, value: float | None = None) -> bool:
    from .exprlang import Num

    if isinstance(f, Num):
        return value is None or f.value == value
    return False


def fconst(value: float) -> Field:
    from .exprlang import Num

    return Num(float(value))


def fadd(a, b) -> Field:
    from . import exprlang

    a, b = _as_field(a), _as_field(b)
    if isinstance(a, exprlang.Expr) and isinstance(b, exprlang.Expr):
        return exprlang.eadd(a, b)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return SumField((a, b))


def fsub(a, b) -> Field:
    from . import exprlang

    a, b = _as_field(a), _as_field(b)
    if isinstance(a, exprlang.Expr) and isinstance(b, exprlang.Expr):
        return exprlang.esub(a, b)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return fneg(b)
    return DiffField(a, b)


def fmul(a, b) -> Field:
    from . import exprlang

    a, b = _as_field(a), _as_field(b)
    if isinstance(a, exprlang.Expr) and isinstance(b, exprlang.Expr):
        return exprlang.emul(a, b)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return fconst(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return ProdField(a, b)


def fneg(a) -> Field:
    from . import exprlang

    a = _as_field(a)
    if isinstance(a, exprlang.Expr):
        return exprlang.eneg(a)
    return NegField(a)


def fsum(terms, zero_ok: bool = True) -> Field:
    acc: Field | None = None
    for t in terms:
        t = _as_field(t)
        if _is_const(t, 0.0):
            continue
        acc = t if acc is None else fadd(acc, t)
    if acc is None:
        if not zero_ok:
            raise ValueError("empty sum")
        return fconst(0.0)
    return acc


def fdot(coeffs, fields) -> Field:
    return fsum(fmul(c, f) for c, f in zip(coeffs, fields, strict=True))


def partial(field, var: str) -> Field:
    """Partial derivative of a field with respect to a named variable.

    Symbolic for expressions, jet-backed (:class:`PartialField`) otherwise.
    """
    from . import exprlang

    field = _as_field(field)
    if isinstance(field, exprlang.Expr):
        return exprlang.differentiate(field, var)
    return PartialField(field, var)


def compose(outer, bindings: dict[str, "Field"]) -> Field:
    return ComposeField(_as_field(outer), {k: _as_field(v) for k, v in bindings.items()})
