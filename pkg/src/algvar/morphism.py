"""Algebroid morphisms over a base map and the reduction of variationality.

A morphism is fiberwise linear: a base map f^j(x) into the target base and
an x-dependent matrix Psi^{a'}_a(x) on fibers.  Being a morphism means the
pullback commutes with the differentials; on the coordinate functions this
is anchor compatibility, on the constant dual basis sections it is a
Maurer-Cartan-type identity, and both are checked numerically, never
assumed.  SODE-relatedness and the forward reduction theorem (a related
SODE inherits weak variationality / variationality through the pulled-back
covector section) are executable checks built on the same residual blocks
as the direct Helmholtz machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebroid import LieAlgebroid, Report, ReportEntry, _as_points
from .exprlang import Var
from .fields import Field, compose, fmul, fsum, partial
from .jets import EvaluationError
from .prolongation import CovectorValue, ProlongCovector
from .sode import (
    Classification,
    HelmholtzReport,
    MultiplierMap,
    SodeSection,
    _entry,
    _kernel_entries,
    classify_full,
    closedness_blocks,
    theta_fields,
)

__all__ = [
    "AlgebroidMorphism",
    "ReductionResult",
    "check_morphism",
    "compose_morphisms",
    "prolong_push",
    "pullback_covector",
    "pullback_covector_fields",
    "reduction_check",
    "sode_related",
]


@dataclass(frozen=True)
class AlgebroidMorphism:
    """Vector-bundle morphism: base map components f^j(x) (target base
    coordinates as fields of the source base) and fiber matrix
    Psi^{a'}_a(x), target-fiber rows by source-fiber columns."""

    source: LieAlgebroid
    target: LieAlgebroid
    base_map: tuple[Field, ...]
    fiber_map: tuple[tuple[Field, ...], ...]

    def __post_init__(self):
        if len(self.base_map) != self.target.m:
            raise ValueError("base map must have one component per target base dim")
        if len(self.fiber_map) != self.target.n or any(
            len(row) != self.source.n for row in self.fiber_map
        ):
            raise ValueError("fiber map must be a (target n) x (source n) table")

    def base_values(self, env) -> np.ndarray:
        return np.array([f.jet(env).value for f in self.base_map])

    def fiber_values(self, env) -> np.ndarray:
        return np.array(
            [[f.jet(env).value for f in row] for row in self.fiber_map]
        ).reshape(self.target.n, self.source.n)

    def image_point(self, point) -> np.ndarray:
        pt = np.asarray(point, dtype=float)
        env = self.source.full_env(pt)
        return np.concatenate([self.base_values(env), self.fiber_values(env) @ pt[self.source.m :]])

    def image_bindings(self) -> dict[str, Field]:
        """Target variables as fields of the source variables."""
        yvars = [Var(name) for name in self.source.y_names]
        bindings: dict[str, Field] = {}
        for j, name in enumerate(self.target.x_names):
            bindings[name] = self.base_map[j]
        for bp, name in enumerate(self.target.y_names):
            bindings[name] = fsum(
                fmul(self.fiber_map[bp][b], yvars[b]) for b in range(self.source.n)
            )
        return bindings


def check_morphism(psi: AlgebroidMorphism, points, tol: float = 1e-8) -> Report:
    """Anchor compatibility and pullback-commutation residuals.

    anchor (j', a):   rho'^{j'}_{a'}(f(x)) Psi^{a'}_a - df^{j'}/dx^i rho^i_a
    pullback (a'; b<g):
        rho^i_b dPsi^{a'}_g/dx^i - rho^i_g dPsi^{a'}_b/dx^i
        - Psi^{a'}_m C^m_bg + C'^{a'}_{b'g'}(f(x)) Psi^{b'}_b Psi^{g'}_g

    The first block is the commutation identity on the target coordinate
    functions, the second on the constant dual basis 1-sections.
    """
    E, Et = psi.source, psi.target
    pts = _as_points(points, E.m)
    entries: list[ReportEntry] = []
    errors: list[dict] = []
    for x in pts:
        try:
            env = E.base_env(x)
            rv = E.rho_values(env)
            cv = E.C_values(env)
            fj = [f.jet(env) for f in psi.base_map]
            pj = [[f.jet(env) for f in row] for row in psi.fiber_map]
            fx = np.array([j.value for j in fj])
            env_t = Et.base_env(fx)
            rv_t = Et.rho_values(env_t)
            cv_t = Et.C_values(env_t)
        except EvaluationError as exc:
            errors.append({"point": tuple(map(float, x)), "condition": "eval", "message": str(exc)})
            continue
        pv = np.array([[j.value for j in row] for row in pj]).reshape(Et.n, E.n)
        for jp in range(Et.m):
            for a in range(E.n):
                terms = [rv_t[jp, ap] * pv[ap, a] for ap in range(Et.n)]
                terms += [-fj[jp].grad[i] * rv[i, a] for i in range(E.m)]
                _entry(entries, "anchor", (jp + 1, a + 1), x, terms)
        for ap in range(Et.n):
            for b in range(E.n):
                for g in range(b + 1, E.n):
                    terms = []
                    for i in range(E.m):
                        terms.append(rv[i, b] * pj[ap][g].grad[i])
                        terms.append(-rv[i, g] * pj[ap][b].grad[i])
                    terms += [-pv[ap, mu] * cv[mu, b, g] for mu in range(E.n)]
                    terms += [
                        cv_t[ap, bp, gp] * pv[bp, b] * pv[gp, g]
                        for bp in range(Et.n)
                        for gp in range(Et.n)
                    ]
                    _entry(entries, "pullback", (ap + 1, b + 1, g + 1), x, terms)
    return Report(entries, tol, errors)


def sode_related(
    psi: AlgebroidMorphism,
    gamma: SodeSection,
    gamma_t: SodeSection,
    points,
    tol: float = 1e-8,
) -> Report:
    """Residuals of the relatedness identity: the prolonged morphism carries
    the source SODE to the target SODE.  T-components match for any
    fiberwise-linear map (asserted); the V-components compare the target
    components at the image against the directional derivative of the fiber
    map along the SODE plus the mapped source components."""
    E, Et = psi.source, psi.target
    pts = _as_points(points, E.m + E.n)
    entries: list[ReportEntry] = []
    errors: list[dict] = []
    for pt in pts:
        try:
            env = E.full_env(pt)
            rv = E.rho_values(env)
            pj = [[f.jet(env) for f in row] for row in psi.fiber_map]
            fx = np.array([f.jet(env).value for f in psi.base_map])
            gv = np.array([g.jet(env).value for g in gamma.components])
            y = pt[E.m :]
            pv = np.array([[j.value for j in row] for row in pj]).reshape(Et.n, E.n)
            img = np.concatenate([fx, pv @ y])
            env_t = Et.full_env(img)
            gv_t = np.array([g.jet(env_t).value for g in gamma_t.components])
        except EvaluationError as exc:
            errors.append({"point": tuple(map(float, pt)), "condition": "eval", "message": str(exc)})
            continue
        w = rv @ y  # base velocity rho^i_b y^b
        for ap in range(Et.n):
            lhs = float(pv[ap] @ y)
            _entry(entries, "T", (ap + 1,), pt, [lhs, -lhs])
            terms = [gv_t[ap]]
            terms += [
                -w[i] * pj[ap][a].grad[i] * y[a] for i in range(E.m) for a in range(E.n)
            ]
            terms += [-pv[ap, a] * gv[a] for a in range(E.n)]
            _entry(entries, "V", (ap + 1,), pt, terms)
    return Report(entries, tol, errors)


def pullback_covector_fields(
    psi: AlgebroidMorphism, theta_t: ProlongCovector
) -> ProlongCovector:
    """Pull a covector section of the target prolongation back to the source:

        nu_a = Psi^{b'}_a nu'_{b'}(img)
        mu_a = Psi^{a'}_a mu'_{a'}(img)
             + rho^i_a dPsi^{b'}_b/dx^i y^b nu'_{b'}(img)

    where img binds the target coordinates to (f(x), Psi(x) y); the pairing
    against the prolonged image of the basis sections is built into the
    coefficients.
    """
    E, Et = psi.source, psi.target
    bindings = psi.image_bindings()
    mu_img = [compose(f, bindings) for f in theta_t.mu]
    nu_img = [compose(f, bindings) for f in theta_t.nu]
    yvars = [Var(name) for name in E.y_names]
    dpsi = [
        [[partial(psi.fiber_map[bp][b], E.x_names[i]) for i in range(E.m)] for b in range(E.n)]
        for bp in range(Et.n)
    ]
    mu, nu = [], []
    for a in range(E.n):
        nu.append(fsum(fmul(psi.fiber_map[bp][a], nu_img[bp]) for bp in range(Et.n)))
        terms = [fmul(psi.fiber_map[ap][a], mu_img[ap]) for ap in range(Et.n)]
        for bp in range(Et.n):
            for b in range(E.n):
                for i in range(E.m):
                    terms.append(
                        fmul(
                            fmul(E.rho[i][a], dpsi[bp][b][i]),
                            fmul(yvars[b], nu_img[bp]),
                        )
                    )
        mu.append(fsum(terms))
    return ProlongCovector(tuple(mu), tuple(nu))


def pullback_covector(
    psi: AlgebroidMorphism, theta_t: ProlongCovector, point
) -> CovectorValue:
    """Value of the pulled-back covector at a source point."""
    pulled = pullback_covector_fields(psi, theta_t)
    env = psi.source.full_env(point)
    return CovectorValue(
        np.array([f.jet(env).value for f in pulled.mu]),
        np.array([f.jet(env).value for f in pulled.nu]),
    )


def prolong_push(psi: AlgebroidMorphism, t_vals, v_vals, point):
    """Push a prolongation section value (T-components a, V-components b)
    through the prolonged morphism:

        t'^{a'} = Psi^{a'}_a a^a
        v'^{b'} = a^a rho^i_a dPsi^{b'}_b/dx^i y^b + Psi^{b'}_b b^b
    """
    E, Et = psi.source, psi.target
    pt = np.asarray(point, dtype=float)
    env = E.full_env(pt)
    rv = E.rho_values(env)
    pj = [[f.jet(env) for f in row] for row in psi.fiber_map]
    pv = np.array([[j.value for j in row] for row in pj]).reshape(Et.n, E.n)
    a = np.asarray(t_vals, dtype=float)
    b = np.asarray(v_vals, dtype=float)
    y = pt[E.m :]
    t_out = pv @ a
    v_out = pv @ b
    for bp in range(Et.n):
        v_out[bp] += sum(
            a[al] * rv[i, al] * pj[bp][bb].grad[i] * y[bb]
            for al in range(E.n)
            for i in range(E.m)
            for bb in range(E.n)
        )
    return t_out, v_out


def compose_morphisms(
    outer: AlgebroidMorphism, inner: AlgebroidMorphism
) -> AlgebroidMorphism:
    """The composite morphism inner.source -> outer.target."""
    if inner.target is not outer.source:
        raise ValueError("morphisms do not chain: inner target must be outer source")
    base_bindings = {
        name: inner.base_map[j] for j, name in enumerate(inner.target.x_names)
    }
    base = tuple(compose(f, base_bindings) for f in outer.base_map)
    fiber = tuple(
        tuple(
            fsum(
                fmul(compose(outer.fiber_map[app][ap], base_bindings), inner.fiber_map[ap][a])
                for ap in range(inner.target.n)
            )
            for a in range(inner.source.n)
        )
        for app in range(outer.target.n)
    )
    return AlgebroidMorphism(inner.source, outer.target, base, fiber)


@dataclass
class ReductionResult:
    target_classification: Classification
    target_report: HelmholtzReport
    report: HelmholtzReport

    @property
    def passed(self) -> bool:
        names = ["R1", "R2", "R3"] + (["K"] if "K" in self.report.blocks else [])
        return self.report.all_pass(names)


def reduction_check(
    psi: AlgebroidMorphism,
    gamma: SodeSection,
    gamma_t: SodeSection,
    F_t: MultiplierMap,
    points,
    tol: float = 1e-8,
) -> ReductionResult:
    """Executable instance of the forward reduction theorem.

    Classifies the target pair, pulls its covector section back to the
    source, and verifies the source-side closedness residuals (and, when the
    target is variational, the source kernel condition) at the sample
    points.  Only the forward direction is checked: the converse hypothesis
    (existence of a target section pulling back to a given one) is not
    searchable.
    """
    E, Et = psi.source, psi.target
    pts = _as_points(points, E.m + E.n)
    img_pts = np.array([psi.image_point(pt) for pt in pts])
    target_report = classify_full(Et, gamma_t, F_t, img_pts, tol)
    sec = theta_fields(Et, gamma_t, F_t)
    pulled = pullback_covector_fields(psi, ProlongCovector(sec.theta, sec.F))
    report = closedness_blocks(E, pulled.mu, pulled.nu, pts, tol)
    if target_report.classification == Classification.VARIATIONAL:
        report.blocks["K"] = _kernel_entries(E, pulled.mu, pts, tol)
    return ReductionResult(target_report.classification, target_report, report)
