"""Second-order forward-mode jets.

A :class:`Jet2` carries the value, gradient and Hessian of a scalar quantity
with respect to a fixed tuple of active variables.  All arithmetic propagates
exact first- and second-order chain rules, so every derivative used elsewhere
in the package is algebraic, never a finite difference.  Finite differences
appear only in :func:`fd_check`, the independent test oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EvalContext",
    "EvaluationError",
    "Jet2",
    "constant_jet",
    "fd_check",
    "jet_add",
    "jet_div",
    "jet_mul",
    "jet_pow",
    "jet_solve",
    "jet_sub",
    "jet_unary",
    "seed",
]


class EvaluationError(ValueError):
    """A jet operation hit a domain violation (divide by zero, log of a
    non-positive value, ...).  Recoverable: point sweeps catch it and record
    the offending point instead of aborting."""

    def __init__(self, operation: str, detail: str):
        self.operation = operation
        self.detail = detail
        super().__init__(f"{operation}: {detail}")


@dataclass(frozen=True)
class Jet2:
    """Value, gradient and Hessian of a scalar at a point.

    ``grad`` has shape ``(d,)`` and ``hess`` shape ``(d, d)`` where ``d`` is
    the number of active variables of the evaluation context.  The Hessian is
    exactly symmetric: every operation below builds it from symmetric inputs
    through commutative float operations.
    """

    value: float
    grad: np.ndarray
    hess: np.ndarray

    @property
    def d(self) -> int:
        return self.grad.shape[0]


def _check_dims(a: Jet2, b: Jet2, op: str) -> None:
    if a.grad.shape[0] != b.grad.shape[0]:
        raise EvaluationError(op, f"mixing jets of dimension {a.d} and {b.d}")


def constant_jet(value: float, d: int) -> Jet2:
    return Jet2(float(value), np.zeros(d), np.zeros((d, d)))


@dataclass(frozen=True)
class EvalContext:
    """Ordered active variables and the base point they are seeded at."""

    names: tuple[str, ...]
    point: np.ndarray

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate variable names in {self.names}")
        pt = np.asarray(self.point, dtype=float)
        if pt.shape != (len(self.names),):
            raise ValueError(
                f"point of length {pt.shape} does not match {len(self.names)} names"
            )
        object.__setattr__(self, "point", pt)

    @property
    def d(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def shifted(self, delta: np.ndarray) -> "EvalContext":
        return EvalContext(self.names, self.point + delta)


def seed(ctx: EvalContext, index: int) -> Jet2:
    """Jet of the ``index``-th coordinate function at the context's point."""
    if not 0 <= index < ctx.d:
        raise IndexError(f"seed index {index} out of range for d={ctx.d}")
    grad = np.zeros(ctx.d)
    grad[index] = 1.0
    return Jet2(float(ctx.point[index]), grad, np.zeros((ctx.d, ctx.d)))


def jet_add(a: Jet2, b: Jet2) -> Jet2:
    _check_dims(a, b, "add")
    return Jet2(a.value + b.value, a.grad + b.grad, a.hess + b.hess)


def jet_sub(a: Jet2, b: Jet2) -> Jet2:
    _check_dims(a, b, "sub")
    return Jet2(a.value - b.value, a.grad - b.grad, a.hess - b.hess)


def jet_mul(a: Jet2, b: Jet2) -> Jet2:
    _check_dims(a, b, "mul")
    hess = (
        a.hess * b.value
        + b.hess * a.value
        + np.outer(a.grad, b.grad)
        + np.outer(b.grad, a.grad)
    )
    return Jet2(a.value * b.value, a.grad * b.value + b.grad * a.value, hess)


def jet_div(a: Jet2, b: Jet2) -> Jet2:
    _check_dims(a, b, "div")
    if b.value == 0.0:
        raise EvaluationError("div", "division by zero")
    value = a.value / b.value
    grad = (a.grad - value * b.grad) / b.value
    hess = (
        a.hess
        - value * b.hess
        - np.outer(grad, b.grad)
        - np.outer(b.grad, grad)
    ) / b.value
    return Jet2(value, grad, hess)


def jet_pow(a: Jet2, exponent: float) -> Jet2:
    """Power with a literal exponent: value a^p, chain rule through p·a^(p−1)."""
    p = float(exponent)
    v = a.value
    if p == 0.0:
        return constant_jet(1.0, a.d)
    if p == 1.0:
        return a
    if p != int(p) and v < 0.0:
        raise EvaluationError("pow", f"negative base {v} with non-integer exponent {p}")
    if v == 0.0 and p < 2.0:
        # the Hessian term needs a^(p-2) with a negative or fractional power
        raise EvaluationError("pow", f"zero base with exponent {p}")
    value = v**p
    d1 = p * v ** (p - 1.0)
    d2 = p * (p - 1.0) * v ** (p - 2.0)
    hess = d1 * a.hess + d2 * np.outer(a.grad, a.grad)
    return Jet2(value, d1 * a.grad, hess)


_UNARY = {
    "sin": (math.sin, math.cos, lambda v: -math.sin(v), None),
    "cos": (math.cos, lambda v: -math.sin(v), lambda v: -math.cos(v), None),
    "exp": (math.exp, math.exp, math.exp, None),
    "log": (math.log, lambda v: 1.0 / v, lambda v: -1.0 / (v * v), "positive"),
    "sqrt": (
        math.sqrt,
        lambda v: 0.5 / math.sqrt(v),
        lambda v: -0.25 / math.sqrt(v) ** 3,
        "positive",
    ),
    "neg": (lambda v: -v, lambda v: -1.0, lambda v: 0.0, None),
}


def jet_unary(f: str, a: Jet2) -> Jet2:
    """Apply one of sin, cos, exp, log, sqrt, neg through the chain rule."""
    try:
        fn, d1fn, d2fn, domain = _UNARY[f]
    except KeyError:
        raise EvaluationError(f, "unknown unary operation") from None
    if f == "neg":
        return Jet2(-a.value, -a.grad, -a.hess)
    if domain == "positive" and a.value <= 0.0:
        raise EvaluationError(f, f"argument {a.value} outside domain")
    v = a.value
    d1 = d1fn(v)
    d2 = d2fn(v)
    hess = d1 * a.hess + d2 * np.outer(a.grad, a.grad)
    return Jet2(fn(v), d1 * a.grad, hess)


def jet_solve(g: list[list[Jet2]], r: list[Jet2]) -> list[Jet2]:
    """Solve the linear system g·x = r for jets by implicit differentiation.

    g is an n×n matrix of jets, r a length-n vector; all share the same d.
    Differentiating g·x = r once gives g·∂x = ∂r − (∂g)·x, twice gives
    g·∂²x = ∂²r − (∂²g)·x − (∂g)(∂x) − (∂g)(∂x) with the two cross terms in
    symmetric index positions, so the returned Hessians stay symmetric.
    Raises :class:`EvaluationError` when g is singular at the point.
    """
    n = len(r)
    d = r[0].d
    gv = np.array([[g[i][j].value for j in range(n)] for i in range(n)])
    gg = np.array([[g[i][j].grad for j in range(n)] for i in range(n)])  # (n,n,d)
    gh = np.array([[g[i][j].hess for j in range(n)] for i in range(n)])  # (n,n,d,d)
    rv = np.array([r[i].value for i in range(n)])
    rg = np.array([r[i].grad for i in range(n)])  # (n,d)
    rh = np.array([r[i].hess for i in range(n)])  # (n,d,d)
    try:
        xv = np.linalg.solve(gv, rv)
        xg = np.linalg.solve(gv, rg - np.einsum("ijk,j->ik", gg, xv))
        rhs = (
            rh
            - np.einsum("ijkl,j->ikl", gh, xv)
            - np.einsum("ijk,jl->ikl", gg, xg)
            - np.einsum("ijl,jk->ikl", gg, xg)
        )
        xh = np.linalg.solve(gv, rhs.reshape(n, d * d)).reshape(n, d, d)
    except np.linalg.LinAlgError as exc:
        raise EvaluationError("solve", f"singular system: {exc}") from None
    return [Jet2(float(xv[i]), xg[i], 0.5 * (xh[i] + xh[i].T)) for i in range(n)]


def fd_check(field, ctx: EvalContext, h: float) -> float:
    """Largest deviation of the field's jet gradient/Hessian from central
    finite differences of step ``h``.

    The check cascades: gradients are compared against differences of plain
    values (independent of every chain rule), then Hessian rows against
    differences of the already-validated gradients.  Value-only second
    differences would carry eps/h^2 roundoff and could never meet the stated
    tolerances; the cascade keeps the error at O(h^2) truncation plus
    eps/h roundoff.
    """
    if h <= 0.0:
        raise ValueError("fd step must be positive")
    from .fields import field_jet  # local import: fields builds on jets

    d = ctx.d
    jet = field_jet(field, ctx)

    worst = 0.0
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        jp = field_jet(field, ctx.shifted(ei))
        jm = field_jet(field, ctx.shifted(-ei))
        worst = max(worst, abs((jp.value - jm.value) / (2 * h) - jet.grad[i]))
        row = (jp.grad - jm.grad) / (2 * h)
        worst = max(worst, float(np.max(np.abs(row - jet.hess[i]))))
    return worst
