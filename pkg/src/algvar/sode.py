"""SODE sections and the Helmholtz machinery.

Given a SODE with fiber components Gamma^alpha(x, y) and a multiplier map
with components F_alpha(x, y), the covector section it drags along has
T-components

    theta_alpha = dF_alpha/dx^i rho^i_beta y^beta
                + dF_alpha/dy^beta Gamma^beta
                + C^gamma_{alpha,beta} F_gamma y^beta

and V-components F_alpha.  Its closedness on the prolongation splits into
three residual blocks,

    R1_bg = dF_b/dy^g - dF_g/dy^b                       (b < g)
    R2_bg = dtheta_g/dy^b - rho^i_g dF_b/dx^i           (all b, g)
    R3_bg = rho^i_b dtheta_g/dx^i - rho^i_g dtheta_b/dx^i
            - theta_a C^a_bg                            (b < g)

with R3 stored antisymmetrized (both half-coefficient terms moved to one
side).  The kernel condition K asks theta to annihilate the anchor kernel;
classification: all four blocks pass -> variational for this multiplier,
R-blocks pass but K fails -> weak variational, some R fails -> fails, and a
singular multiplier matrix anywhere -> degenerate.  The classification
certifies the supplied multiplier map on the supplied sample set; there is
no search over multipliers.

The module also carries the horizontal-basis reformulation of the same
conditions (blocks P1-P4 built from the connection quantities Lambda, D,
Phi and the symmetrized matrix A) and the reduced necessary-and-sufficient
set for Atiyah algebroids.

Residual tolerances are mixed absolute/relative: an entry passes when
|residual| <= tol * (1 + sum of the magnitudes of its constituent terms).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .algebroid import (
    LieAlgebroid,
    RegularityError,
    Report,
    ReportEntry,
    _as_points,
    kernel_basis,
)
from .exprlang import Var
from .fields import Field, fconst, fmul, fneg, fsub, fsum, partial
from .jets import EvaluationError

__all__ = [
    "Classification",
    "HelmholtzReport",
    "MultiplierMap",
    "SodeSection",
    "ThetaSection",
    "ThetaValues",
    "atiyah_reduced_residuals",
    "classify",
    "classify_full",
    "connection_quantities",
    "helmholtz_residuals",
    "kernel_condition",
    "lambda_fields",
    "horizontal_helmholtz_residuals",
    "sode_derivative",
    "theta_components",
    "theta_fields",
]

COND_MAX = 1e12  # condition-number threshold for a singular multiplier matrix


class Classification(str, Enum):
    VARIATIONAL = "variational"
    WEAK_VARIATIONAL = "weak_variational"
    FAILS = "fails"
    DEGENERATE = "degenerate"

    def __str__(self) -> str:  # CLI prints the bare value
        return self.value


@dataclass(frozen=True)
class SodeSection:
    """Fiber components Gamma^alpha(x, y) of a SODE section; the section
    itself is y^alpha T_alpha + Gamma^alpha V_alpha, so S(Gamma) = Delta
    holds by construction."""

    components: tuple[Field, ...]


@dataclass(frozen=True)
class MultiplierMap:
    """Components F_alpha(x, y) of a fiberwise map into the dual bundle;
    its fiber Jacobian dF_alpha/dy^beta is the multiplier matrix."""

    components: tuple[Field, ...]


@dataclass(frozen=True)
class ThetaSection:
    theta: tuple[Field, ...]
    F: tuple[Field, ...]


@dataclass(frozen=True)
class ThetaValues:
    theta: np.ndarray
    F: np.ndarray


@dataclass
class HelmholtzReport:
    """Residual blocks keyed by name, with scaled pass/fail semantics."""

    blocks: dict[str, list[ReportEntry]]
    tolerance: float
    degenerate_points: list[dict] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    classification: Classification | None = None
    diagnostics: dict[str, list[ReportEntry]] = field(default_factory=dict)

    def block_max(self, name: str) -> float:
        return max((abs(e.residual) for e in self.blocks.get(name, ())), default=0.0)

    def block_passes(self, name: str) -> bool:
        return all(e.within(self.tolerance, scaled=True) for e in self.blocks.get(name, ()))

    def all_pass(self, names=None) -> bool:
        names = self.blocks.keys() if names is None else names
        return not self.errors and all(self.block_passes(n) for n in names)


def anchor_velocity_fields(E: LieAlgebroid) -> list[Field]:
    """W^i = rho^i_beta y^beta, the base velocity of the SODE flow."""
    yvars = [Var(name) for name in E.y_names]
    return [
        fsum(fmul(E.rho[i][b], yvars[b]) for b in range(E.n)) for i in range(E.m)
    ]


def theta_fields(E: LieAlgebroid, gamma: SodeSection, F: MultiplierMap) -> ThetaSection:
    """The T-components of the dragged covector section, as fields."""
    if len(gamma.components) != E.n or len(F.components) != E.n:
        raise ValueError("SODE and multiplier must have n components")
    w = anchor_velocity_fields(E)
    yvars = [Var(name) for name in E.y_names]
    theta = []
    for a in range(E.n):
        terms = []
        for i in range(E.m):
            terms.append(fmul(partial(F.components[a], E.x_names[i]), w[i]))
        for b in range(E.n):
            terms.append(fmul(partial(F.components[a], E.y_names[b]), gamma.components[b]))
        for g in range(E.n):
            for b in range(E.n):
                terms.append(fmul(E.C[g][a][b], fmul(F.components[g], yvars[b])))
        theta.append(fsum(terms))
    return ThetaSection(tuple(theta), F.components)


def theta_components(E: LieAlgebroid, gamma: SodeSection, F: MultiplierMap, point) -> ThetaValues:
    """Values of (theta_alpha, F_alpha) at a point of E."""
    sec = theta_fields(E, gamma, F)
    env = E.full_env(point)
    return ThetaValues(
        np.array([f.jet(env).value for f in sec.theta]),
        np.array([f.jet(env).value for f in sec.F]),
    )


def sode_derivative(E: LieAlgebroid, gamma: SodeSection, f: Field, point) -> float:
    """Derivative of a scalar field along the SODE vector field
    y^a rho^i_a d/dx^i + Gamma^a d/dy^a."""
    env = E.full_env(point)
    fj = f.jet(env)
    rv = E.rho_values(env)
    pt = np.asarray(point, dtype=float)
    y = pt[E.m :]
    gv = np.array([g.jet(env).value for g in gamma.components])
    out = 0.0
    for i in range(E.m):
        out += float(rv[i] @ y) * fj.grad[i]
    for b in range(E.n):
        out += gv[b] * fj.grad[E.m + b]
    return out


def sode_derivative_field(E: LieAlgebroid, gamma: SodeSection, f: Field) -> Field:
    w = anchor_velocity_fields(E)
    terms = [fmul(w[i], partial(f, E.x_names[i])) for i in range(E.m)]
    terms += [
        fmul(gamma.components[b], partial(f, E.y_names[b])) for b in range(E.n)
    ]
    return fsum(terms)


def _entry(block, cond, idx, point, terms, label=None):
    residual = float(np.sum(terms))
    scale = 1.0 + float(np.sum(np.abs(terms)))
    block.append(ReportEntry(cond, idx, tuple(point), residual, scale, label))


def _kernel_label(E: LieAlgebroid, *indices: int) -> str | None:
    if E.kernel_indices is None:
        return None
    ker = set(E.kernel_indices)
    return "".join("I" if i in ker else "a" for i in indices)


def closedness_blocks(
    E: LieAlgebroid,
    mu: tuple[Field, ...],
    nu: tuple[Field, ...],
    points,
    tol: float,
) -> HelmholtzReport:
    """R1/R2/R3 residuals of d(prolongation)Theta = 0 for a covector section
    with T-components mu and V-components nu."""
    pts = _as_points(points, E.m + E.n)
    m, n = E.m, E.n
    blocks: dict[str, list[ReportEntry]] = {"R1": [], "R2": [], "R3": []}
    errors: list[dict] = []
    for pt in pts:
        try:
            env = E.full_env(pt)
            mj = [f.jet(env) for f in mu]
            nj = [f.jet(env) for f in nu]
            rv = E.rho_values(env)
            cv = E.C_values(env)
        except EvaluationError as exc:
            errors.append({"point": tuple(map(float, pt)), "condition": "eval", "message": str(exc)})
            continue
        for b in range(n):
            for g in range(b + 1, n):
                _entry(
                    blocks["R1"],
                    "R1",
                    (b + 1, g + 1),
                    pt,
                    [nj[b].grad[m + g], -nj[g].grad[m + b]],
                    _kernel_label(E, b, g),
                )
        for b in range(n):
            for g in range(n):
                terms = [mj[g].grad[m + b]]
                terms += [-rv[i, g] * nj[b].grad[i] for i in range(m)]
                _entry(blocks["R2"], "R2", (b + 1, g + 1), pt, terms, _kernel_label(E, b, g))
        for b in range(n):
            for g in range(b + 1, n):
                terms = []
                for i in range(m):
                    terms.append(rv[i, b] * mj[g].grad[i])
                    terms.append(-rv[i, g] * mj[b].grad[i])
                terms += [-mj[a].value * cv[a, b, g] for a in range(n)]
                _entry(blocks["R3"], "R3", (b + 1, g + 1), pt, terms, _kernel_label(E, b, g))
    return HelmholtzReport(blocks, tol, errors=errors)


def _degeneracy(E: LieAlgebroid, F: MultiplierMap, pts) -> list[dict]:
    out = []
    for pt in pts:
        try:
            env = E.full_env(pt)
            g = np.zeros((E.n, E.n))
            for a in range(E.n):
                ja = F.components[a].jet(env)
                g[a] = ja.grad[E.m :]
            cond = float(np.linalg.cond(g)) if E.n else 1.0
        except EvaluationError:
            cond = float("inf")
        if not np.isfinite(cond) or cond > COND_MAX:
            out.append({"point": tuple(map(float, pt)), "cond": cond})
    return out


def helmholtz_residuals(
    E: LieAlgebroid, gamma: SodeSection, F: MultiplierMap, points, tol: float = 1e-8
) -> HelmholtzReport:
    """The three Helmholtz residual blocks for (Gamma, F) at the sample
    points, plus multiplier degeneracy flags.  When the algebroid has a
    declared kernel-adapted basis, every entry is labelled by the kernel
    membership of its indices ('a' regular, 'I' kernel), so the adapted-basis
    split of the conditions is recoverable from the same numbers; the
    y-independence of the kernel components of theta (a consequence, not a
    condition) is attached as a diagnostic when the R-blocks pass."""
    pts = _as_points(points, E.m + E.n)
    sec = theta_fields(E, gamma, F)
    report = closedness_blocks(E, sec.theta, sec.F, pts, tol)
    report.degenerate_points = _degeneracy(E, F, pts)
    if E.kernel_indices and report.all_pass(("R1", "R2", "R3")):
        diag: list[ReportEntry] = []
        for pt in pts:
            env = E.full_env(pt)
            for idx in sorted(E.kernel_indices):
                tj = sec.theta[idx].jet(env)
                for b in range(E.n):
                    _entry(
                        diag,
                        "theta_kernel_y",
                        (idx + 1, b + 1),
                        pt,
                        [tj.grad[E.m + b]],
                    )
        report.diagnostics["theta_kernel_y"] = diag
    return report


def _kernel_entries(
    E: LieAlgebroid, theta: tuple[Field, ...], pts, tol: float
) -> list[ReportEntry]:
    kernels = [kernel_basis(E, pt[: E.m]) for pt in pts]
    ranks = {k.rank for k in kernels}
    if len(ranks) > 1:
        raise RegularityError(
            f"anchor rank is not constant on the sampled region: ranks {sorted(ranks)}"
        )
    entries: list[ReportEntry] = []
    for pt, ker in zip(pts, kernels):
        env = E.full_env(pt)
        tv = np.array([f.jet(env).value for f in theta])
        for k in range(ker.basis.shape[1]):
            z = ker.basis[:, k]
            _entry(entries, "K", (k + 1,), pt, tv * z)
    return entries


def kernel_condition(
    E: LieAlgebroid, gamma: SodeSection, F: MultiplierMap, points, tol: float = 1e-8
) -> Report:
    """Residuals of theta against a basis of the anchor kernel.  With a
    declared kernel-adapted basis these are the theta_I themselves."""
    pts = _as_points(points, E.m + E.n)
    sec = theta_fields(E, gamma, F)
    return Report(_kernel_entries(E, sec.theta, pts, tol), tol)


def classify_full(
    E: LieAlgebroid, gamma: SodeSection, F: MultiplierMap, points, tol: float = 1e-8
) -> HelmholtzReport:
    """Helmholtz + kernel blocks with the classification attached."""
    pts = _as_points(points, E.m + E.n)
    report = helmholtz_residuals(E, gamma, F, pts, tol)
    sec = theta_fields(E, gamma, F)
    report.blocks["K"] = _kernel_entries(E, sec.theta, pts, tol)
    if report.degenerate_points:
        report.classification = Classification.DEGENERATE
    elif report.errors or not report.all_pass(("R1", "R2", "R3")):
        report.classification = Classification.FAILS
    elif not report.block_passes("K"):
        report.classification = Classification.WEAK_VARIATIONAL
    else:
        report.classification = Classification.VARIATIONAL
    return report


def classify(
    E: LieAlgebroid, gamma: SodeSection, F: MultiplierMap, points, tol: float = 1e-8
) -> Classification:
    """Classification of (Gamma, F) on the sample set.  Certifies the
    supplied multiplier map only; no search over F is attempted."""
    return classify_full(E, gamma, F, points, tol).classification


# ---------------------------------------------------------------------------
# horizontal-basis (connection) reformulation


def lambda_fields(E: LieAlgebroid, gamma: SodeSection) -> list[list[Field]]:
    """Lambda^g_a = (dGamma^g/dy^a - C^g_ab y^b) / 2, the connection
    coefficients of the horizontal lift induced by the SODE."""
    yvars = [Var(name) for name in E.y_names]
    half = fconst(0.5)
    out = []
    for g in range(E.n):
        row = []
        for a in range(E.n):
            cy = fsum(fmul(E.C[g][a][b], yvars[b]) for b in range(E.n))
            row.append(fmul(half, fsub(partial(gamma.components[g], E.y_names[a]), cy)))
        out.append(row)
    return out


def d_fields(E: LieAlgebroid, gamma: SodeSection) -> list[list[Field]]:
    """D^g_e = (y^b C^g_be - dGamma^g/dy^e) / 2, the coefficient of the
    vertical basis in the bracket of the SODE with vertical sections (equal
    to -Lambda only when the C-term vanishes; the identity that does hold is
    D + Lambda = y^b C^g_be)."""
    yvars = [Var(name) for name in E.y_names]
    half = fconst(0.5)
    out = []
    for g in range(E.n):
        row = []
        for e in range(E.n):
            yc = fsum(fmul(yvars[b], E.C[g][b][e]) for b in range(E.n))
            row.append(fmul(half, fsub(yc, partial(gamma.components[g], E.y_names[e]))))
        out.append(row)
    return out


def phi_fields(
    E: LieAlgebroid, gamma: SodeSection, lam: list[list[Field]] | None = None
) -> list[list[Field]]:
    """Phi^g_e = Gamma(Lambda^g_e) + Lambda^n_e Lambda^g_n
    - Lambda^n_e dGamma^g/dy^n - rho^i_e dGamma^g/dx^i
    + y^a C^n_ea Lambda^g_n, the Jacobi-endomorphism-type tensor."""
    lam = lambda_fields(E, gamma) if lam is None else lam
    yvars = [Var(name) for name in E.y_names]
    dgam_y = [
        [partial(gamma.components[g], E.y_names[nn]) for nn in range(E.n)]
        for g in range(E.n)
    ]
    out = []
    for g in range(E.n):
        row = []
        for e in range(E.n):
            terms = [sode_derivative_field(E, gamma, lam[g][e])]
            for nn in range(E.n):
                terms.append(fmul(lam[nn][e], lam[g][nn]))
                terms.append(fneg(fmul(lam[nn][e], dgam_y[g][nn])))
            for i in range(E.m):
                terms.append(fneg(fmul(E.rho[i][e], partial(gamma.components[g], E.x_names[i]))))
            for a in range(E.n):
                for nn in range(E.n):
                    terms.append(fmul(fmul(yvars[a], E.C[nn][e][a]), lam[g][nn]))
            row.append(fsum(terms))
        out.append(row)
    return out


def connection_quantities(E: LieAlgebroid, gamma: SodeSection, point):
    """Values of (Lambda, D, Phi) at a point, each an n*n array indexed
    [upper][lower]."""
    lam = lambda_fields(E, gamma)
    dd = d_fields(E, gamma)
    phi = phi_fields(E, gamma, lam)
    env = E.full_env(point)

    def values(mat):
        return np.array([[f.jet(env).value for f in row] for row in mat]).reshape(E.n, E.n)

    return values(lam), values(dd), values(phi)


def horizontal_helmholtz_residuals(
    E: LieAlgebroid, gamma: SodeSection, F: MultiplierMap, points, tol: float = 1e-8
) -> HelmholtzReport:
    """The horizontal-basis form of the Helmholtz conditions:

    P1 = multiplier symmetry (same as R1);
    P2 = A_eb - A_be with A_ga = rho(H_g)(F_a) - F_n C^n_ga / 2,
         rho(H_g) = rho^i_g d/dx^i + Lambda^n_g d/dy^n;
    P3 = dF_b/dy^g Phi^g_e - dF_e/dy^g Phi^g_b;
    P4 = Gamma(dF_e/dy^b) - dF_g/dy^b D^g_e - dF_e/dy^g D^g_b,
         over all ordered pairs (the diagonal carries real conditions).

    System-level equivalent to R1/R2/R3: all P-blocks pass iff all R-blocks
    pass, at matching tolerances.
    """
    pts = _as_points(points, E.m + E.n)
    m, n = E.m, E.n
    lam = lambda_fields(E, gamma)
    dd = d_fields(E, gamma)
    phi = phi_fields(E, gamma, lam)
    g_fields = [
        [partial(F.components[a], E.y_names[b]) for b in range(n)] for a in range(n)
    ]
    a_fields = []
    for g in range(n):
        row = []
        for a in range(n):
            terms = [fmul(E.rho[i][g], partial(F.components[a], E.x_names[i])) for i in range(m)]
            terms += [fmul(lam[nn][g], g_fields[a][nn]) for nn in range(n)]
            terms += [
                fneg(fmul(fconst(0.5), fmul(F.components[nn], E.C[nn][g][a])))
                for nn in range(n)
            ]
            row.append(fsum(terms))
        a_fields.append(row)
    gamma_g = [
        [sode_derivative_field(E, gamma, g_fields[e][b]) for b in range(n)]
        for e in range(n)
    ]
    blocks: dict[str, list[ReportEntry]] = {"P1": [], "P2": [], "P3": [], "P4": []}
    errors: list[dict] = []
    for pt in pts:
        try:
            env = E.full_env(pt)
            gv = np.array([[f.jet(env).value for f in row] for row in g_fields]).reshape(n, n)
            av = np.array([[f.jet(env).value for f in row] for row in a_fields]).reshape(n, n)
            phiv = np.array([[f.jet(env).value for f in row] for row in phi]).reshape(n, n)
            dv = np.array([[f.jet(env).value for f in row] for row in dd]).reshape(n, n)
            ggv = np.array([[f.jet(env).value for f in row] for row in gamma_g]).reshape(n, n)
        except EvaluationError as exc:
            errors.append({"point": tuple(map(float, pt)), "condition": "eval", "message": str(exc)})
            continue
        for b in range(n):
            for g in range(b + 1, n):
                _entry(blocks["P1"], "P1", (b + 1, g + 1), pt, [gv[b, g], -gv[g, b]])
                _entry(blocks["P2"], "P2", (b + 1, g + 1), pt, [av[b, g], -av[g, b]])
                terms = [gv[g, nn] * phiv[nn, b] for nn in range(n)]
                terms += [-gv[b, nn] * phiv[nn, g] for nn in range(n)]
                _entry(blocks["P3"], "P3", (b + 1, g + 1), pt, terms)
        for e in range(n):
            for b in range(n):
                terms = [ggv[e, b]]
                terms += [-gv[g, b] * dv[g, e] for g in range(n)]
                terms += [-gv[e, g] * dv[g, b] for g in range(n)]
                _entry(blocks["P4"], "P4", (e + 1, b + 1), pt, terms)
    return HelmholtzReport(blocks, tol, degenerate_points=_degeneracy(E, F, pts), errors=errors)


def atiyah_reduced_residuals(
    E: LieAlgebroid, gamma: SodeSection, F: MultiplierMap, points, tol: float = 1e-8
) -> HelmholtzReport:
    """Necessary-and-sufficient variationality conditions specific to Atiyah
    algebroids (horizontal indices i, j pair with the base, vertical indices
    a span the kernel):

    A1: dF_b/dy^g symmetric          A2: dtheta_j/dy^b = dF_b/dx^j
    A3: dtheta_i/dx^j = dtheta_j/dx^i   A4: theta_a = 0

    When A4 passes, the three Helmholtz blocks it implies are evaluated as
    blocks I1 (dtheta_a/dy^b), I2 (dtheta_a/dx^i - theta_b c^b_ad A^d_i) and
    I3 (theta_c c^c_ab) and attached to the report; they must pass too.
    """
    if E.atiyah is None:
        raise ValueError("atiyah_reduced_residuals requires an Atiyah-built algebroid")
    data = E.atiyah
    m, ng, n = data.m, data.n_g, E.n
    pts = _as_points(points, E.m + E.n)
    sec = theta_fields(E, gamma, F)
    blocks: dict[str, list[ReportEntry]] = {"A1": [], "A2": [], "A3": [], "A4": []}
    errors: list[dict] = []
    per_point = []
    for pt in pts:
        try:
            env = E.full_env(pt)
            tj = [f.jet(env) for f in sec.theta]
            fj = [f.jet(env) for f in F.components]
            av = np.array([[f.jet(env).value for f in row] for row in data.A]).reshape(ng, m)
        except EvaluationError as exc:
            errors.append({"point": tuple(map(float, pt)), "condition": "eval", "message": str(exc)})
            continue
        per_point.append((pt, tj, av))
        for b in range(n):
            for g in range(b + 1, n):
                _entry(blocks["A1"], "A1", (b + 1, g + 1), pt, [fj[b].grad[m + g], -fj[g].grad[m + b]])
        for b in range(n):
            for j in range(m):
                _entry(
                    blocks["A2"],
                    "A2",
                    (b + 1, j + 1),
                    pt,
                    [tj[j].grad[m + b], -fj[b].grad[j]],
                )
        for i in range(m):
            for j in range(i + 1, m):
                _entry(blocks["A3"], "A3", (i + 1, j + 1), pt, [tj[i].grad[j], -tj[j].grad[i]])
        for a in range(ng):
            _entry(blocks["A4"], "A4", (a + 1,), pt, [tj[m + a].value])
    report = HelmholtzReport(blocks, tol, degenerate_points=_degeneracy(E, F, pts), errors=errors)
    if report.block_passes("A4"):
        i1, i2, i3 = [], [], []
        for pt, tj, av in per_point:
            theta_vert = np.array([tj[m + a].value for a in range(ng)])
            for a in range(ng):
                for b in range(n):
                    _entry(i1, "I1", (a + 1, b + 1), pt, [tj[m + a].grad[m + b]])
                for i in range(m):
                    terms = [tj[m + a].grad[i]]
                    terms += [
                        -theta_vert[b] * data.c[b, a, dd] * av[dd, i]
                        for b in range(ng)
                        for dd in range(ng)
                    ]
                    _entry(i2, "I2", (a + 1, i + 1), pt, terms)
                for b in range(a + 1, ng):
                    terms = [theta_vert[cc] * data.c[cc, a, b] for cc in range(ng)]
                    _entry(i3, "I3", (a + 1, b + 1), pt, terms)
        report.blocks["I1"] = i1
        report.blocks["I2"] = i2
        report.blocks["I3"] = i3
    return report
