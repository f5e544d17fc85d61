"""Coordinate realization of the prolongation of an algebroid over itself.

Sections are written in the standard basis pair (T-part, V-part): the
T-sections project to the algebroid basis and anchor to rho^i_alpha d/dx^i,
the V-sections anchor to the fiber derivatives d/dy^alpha.  The module
provides the bracket/anchor table of that basis, the vertical endomorphism
and Euler section, horizontal lifts induced by a SODE, the fiberwise lift of
a map into the dual, the Tulczyjew coordinate swap, and their composition
into the covector section whose closedness encodes the Helmholtz conditions
(cross-validated against the direct formula in :mod:`algvar.sode`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebroid import LieAlgebroid
from .exprlang import Var
from .fields import Field, fconst

__all__ = [
    "CovectorValue",
    "ProlongCovector",
    "ProlongSection",
    "ProlongStructure",
    "ProlongVector",
    "euler_section",
    "horizontal_lift_basis",
    "lift_map",
    "prolong_structure",
    "theta_composition",
    "tulczyjew_map",
    "vertical_endo",
]


@dataclass(frozen=True)
class ProlongVector:
    """A point of the prolongation: base point (x, y) plus components
    (z, v) along the T- and V-basis."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name in ("x", "y", "z", "v"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (len(self.y) == len(self.z) == len(self.v)):
            raise ValueError("fiber, T- and V-components must share the fiber dimension")


@dataclass(frozen=True)
class ProlongSection:
    """Section of the prolongation: n T-components and n V-components,
    scalar fields in (x, y)."""

    t: tuple[Field, ...]
    v: tuple[Field, ...]


@dataclass(frozen=True)
class ProlongCovector:
    """Covector section of the prolongation: mu against the dual T-basis,
    nu against the dual V-basis."""

    mu: tuple[Field, ...]
    nu: tuple[Field, ...]


@dataclass(frozen=True)
class CovectorValue:
    mu: np.ndarray
    nu: np.ndarray


@dataclass(frozen=True)
class ProlongStructure:
    """Bracket table and anchor action of the T/V basis.

    bracket[(kind_a, i), (kind_b, j)] is a list of ((kind_c, k), coefficient
    field) pairs; anchor[(kind, i)] lists (variable name, coefficient field)
    pairs describing the image derivation.
    """

    E: LieAlgebroid
    bracket: dict
    anchor: dict


def prolong_structure(E: LieAlgebroid) -> ProlongStructure:
    """[T_a, T_b] = C^g_ab T_g, [T, V] = [V, V] = 0; T_a anchors to
    rho^i_a d/dx^i and V_a to d/dy^a."""
    bracket = {}
    for a in range(E.n):
        for b in range(E.n):
            bracket[(("T", a), ("T", b))] = [
                (("T", g), E.C[g][a][b]) for g in range(E.n)
            ]
            bracket[(("T", a), ("V", b))] = []
            bracket[(("V", a), ("T", b))] = []
            bracket[(("V", a), ("V", b))] = []
    anchor = {}
    for a in range(E.n):
        anchor[("T", a)] = [(f"x{i + 1}", E.rho[i][a]) for i in range(E.m)]
        anchor[("V", a)] = [(f"y{a + 1}", fconst(1.0))]
    return ProlongStructure(E, bracket, anchor)


def vertical_endo(s: ProlongSection, E: LieAlgebroid) -> ProlongSection:
    """S maps a T + b V to a V: kills vertical lifts, sends T-basis sections
    to their vertical counterparts (the bracket correction between the
    T-basis and complete lifts is vertical, so S does not see it)."""
    zero = fconst(0.0)
    return ProlongSection(tuple(zero for _ in range(E.n)), s.t)


def euler_section(E: LieAlgebroid) -> ProlongSection:
    zero = fconst(0.0)
    return ProlongSection(
        tuple(zero for _ in range(E.n)),
        tuple(Var(name) for name in E.y_names),
    )


def horizontal_lift_basis(E: LieAlgebroid, gamma) -> list[ProlongSection]:
    """Horizontal basis sections H_a = T_a + Lambda^g_a V_g for the
    connection induced by the SODE."""
    from .sode import lambda_fields

    lam = lambda_fields(E, gamma)
    zero, one = fconst(0.0), fconst(1.0)
    out = []
    for a in range(E.n):
        t = tuple(one if b == a else zero for b in range(E.n))
        v = tuple(lam[g][a] for g in range(E.n))
        out.append(ProlongSection(t, v))
    return out


def tulczyjew_map(E: LieAlgebroid, p) -> tuple[np.ndarray, ...]:
    """Coordinate isomorphism (x, y*, z, v) -> (x, z, v_a + C^g_ab y*_g z^b, y*)."""
    x, y_star, z, v = (np.asarray(q, dtype=float) for q in p)
    if len(y_star) != E.n or len(z) != E.n or len(v) != E.n or len(x) != E.m:
        raise ValueError("tulczyjew_map: component lengths must be (m, n, n, n)")
    env = E.base_env(x)
    cv = E.C_values(env)
    third = v + np.einsum("gab,g,b->a", cv, y_star, z)
    return (x, z, third, y_star)


def lift_map(E: LieAlgebroid, F, p: ProlongVector) -> tuple[np.ndarray, ...]:
    """Induced map on the prolongation of a fiber map F into the dual:
    (x, y, z, v) -> (x, F(x,y), z, rho^i_b z^b dF_a/dx^i + v^b dF_a/dy^b)."""
    env = E.full_env(np.concatenate([p.x, p.y]))
    fj = [comp.jet(env) for comp in F.components]
    rv = E.rho_values(env)
    m, n = E.m, E.n
    f_vals = np.array([j.value for j in fj])
    w = np.zeros(n)
    for a in range(n):
        w[a] = sum(
            rv[i, b] * p.z[b] * fj[a].grad[i] for i in range(m) for b in range(n)
        ) + sum(p.v[b] * fj[a].grad[m + b] for b in range(n))
    return (p.x, f_vals, p.z, w)


def theta_composition(E: LieAlgebroid, gamma, F, point) -> CovectorValue:
    """The covector section of the dual prolongation obtained by composing
    the SODE, the lifted multiplier map and the Tulczyjew swap; must agree
    with the direct component formula in :mod:`algvar.sode`."""
    pt = np.asarray(point, dtype=float)
    x, y = pt[: E.m], pt[E.m :]
    env = E.full_env(pt)
    gamma_vals = np.array([g.jet(env).value for g in gamma.components])
    pv = ProlongVector(x, y, y.copy(), gamma_vals)
    x2, f_vals, z2, w = lift_map(E, F, pv)
    _, _, mu, nu = tulczyjew_map(E, (x2, f_vals, z2, w))
    return CovectorValue(mu, nu)
