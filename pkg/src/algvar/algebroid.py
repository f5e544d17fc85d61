"""Lie algebroids given by local structure functions.

An algebroid over an m-dimensional base with n-dimensional fibers is stored
as the anchor components rho[i][alpha] and bracket coefficients
C[gamma][alpha][beta], all scalar fields of the base coordinates x1..xm.
The module validates the structure equations, computes the exterior
differential on functions and 1-sections, finds anchor kernels, classifies
local exactness (closed + kernel-annihilating, on regular algebroids), and
builds the standard examples: tangent bundles, Lie algebras and Atiyah
algebroids of principal bundles.

Exterior-differential convention: the antisymmetrized coefficient

    (dtheta)_{beta,gamma} = rho^i_beta d(theta_gamma)/dx^i
                          - rho^i_gamma d(theta_beta)/dx^i
                          - theta_alpha C^alpha_{beta,gamma}

is stored against the basis {e^beta wedge e^gamma : beta < gamma}; this
removes the 1/2-coefficient ambiguity of the wedge expansion and is the form
every downstream residual uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import Field, env_at, fconst, fmul, fneg, fsub, fsum, partial
from .jets import EvaluationError, Jet2

__all__ = [
    "AtiyahData",
    "KernelBasis",
    "LieAlgebroid",
    "OneSection",
    "RegularityError",
    "Report",
    "ReportEntry",
    "atiyah_algebroid",
    "atiyah_curvature",
    "dE_function",
    "dE_one_section",
    "kernel_basis",
    "lie_algebra",
    "local_exactness_check",
    "tangent_bundle",
    "validate_structure",
]

RANK_TOL = 1e-10  # relative singular-value threshold for numeric kernels


class RegularityError(RuntimeError):
    """The anchor rank jumped across the sampled region; Lemma-style exactness
    classification is only meaningful on regular algebroids."""


@dataclass
class ReportEntry:
    condition: str
    indices: tuple[int, ...]
    point: tuple[float, ...]
    residual: float
    scale: float = 1.0
    label: str | None = None

    def __post_init__(self):
        self.indices = tuple(int(i) for i in self.indices)
        self.point = tuple(float(v) for v in self.point)
        self.residual = float(self.residual)
        self.scale = float(self.scale)

    def within(self, tol: float, scaled: bool = False) -> bool:
        bound = tol * self.scale if scaled else tol
        return abs(self.residual) <= bound


@dataclass
class Report:
    """Structured residual table for one check over a set of sample points."""

    entries: list[ReportEntry]
    tolerance: float
    errors: list[dict] = field(default_factory=list)

    @property
    def max_residual(self) -> float:
        return max((abs(e.residual) for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return not self.errors and self.max_residual <= self.tolerance

    def entries_for(self, condition: str) -> list[ReportEntry]:
        return [e for e in self.entries if e.condition == condition]

    def max_for(self, condition: str) -> float:
        return max((abs(e.residual) for e in self.entries_for(condition)), default=0.0)


@dataclass(frozen=True)
class OneSection:
    """A section of the dual bundle: n component fields of x."""

    components: tuple[Field, ...]


@dataclass(frozen=True)
class LieAlgebroid:
    """Local data of a Lie algebroid: anchor rho^i_alpha(x) and bracket
    coefficients C^gamma_{alpha,beta}(x), antisymmetric in (alpha, beta).

    kernel_indices lists fiber indices (0-based) whose anchor columns vanish
    identically, enabling exact kernel-adapted bases; None means the kernel
    is found numerically.  Lie algebras are encoded with m = 0: there are no
    base variables at all, so every d/dx term vanishes structurally.
    """

    m: int
    n: int
    rho: tuple[tuple[Field, ...], ...]
    C: tuple[tuple[tuple[Field, ...], ...], ...]
    kernel_indices: tuple[int, ...] | None = None
    atiyah: "AtiyahData | None" = None

    def __post_init__(self):
        if len(self.rho) != self.m or any(len(row) != self.n for row in self.rho):
            raise ValueError("anchor table must be m rows of n fields")
        if len(self.C) != self.n or any(
            len(block) != self.n or any(len(row) != self.n for row in block)
            for block in self.C
        ):
            raise ValueError("bracket table must be n*n*n fields")
        if self.kernel_indices is not None:
            bad = [k for k in self.kernel_indices if not 0 <= k < self.n]
            if bad:
                raise ValueError(f"kernel indices out of range: {bad}")

    @property
    def x_names(self) -> tuple[str, ...]:
        return tuple(f"x{i + 1}" for i in range(self.m))

    @property
    def y_names(self) -> tuple[str, ...]:
        return tuple(f"y{a + 1}" for a in range(self.n))

    def base_env(self, x):
        return env_at(self.x_names, x)

    def full_env(self, point):
        pt = np.asarray(point, dtype=float)
        if pt.shape != (self.m + self.n,):
            raise ValueError(f"point must have length m+n={self.m + self.n}")
        return env_at(self.x_names + self.y_names, pt)

    def rho_jets(self, env) -> list[list[Jet2]]:
        return [[f.jet(env) for f in row] for row in self.rho]

    def rho_values(self, env) -> np.ndarray:
        out = np.zeros((self.m, self.n))
        for i in range(self.m):
            for a in range(self.n):
                out[i, a] = self.rho[i][a].jet(env).value
        return out

    def C_jets(self, env) -> list[list[list[Jet2]]]:
        return [[[f.jet(env) for f in row] for row in block] for block in self.C]

    def C_values(self, env) -> np.ndarray:
        out = np.zeros((self.n, self.n, self.n))
        for g in range(self.n):
            for a in range(self.n):
                for b in range(self.n):
                    out[g, a, b] = self.C[g][a][b].jet(env).value
        return out


def _as_points(points, dim: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if dim == 0:
        if pts.size == 0:
            return np.zeros((max(pts.shape[0] if pts.ndim else 1, 1), 0))
        return pts.reshape(-1, 0)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.shape[1] != dim:
        raise ValueError(f"points must have length {dim}, got {pts.shape[1]}")
    return pts


def validate_structure(E: LieAlgebroid, points, tol: float = 1e-10) -> Report:
    """Residuals of the two structure equations at every index combination.

    Anchor compatibility:  rho^j_a d(rho^i_b)/dx^j - rho^j_b d(rho^i_a)/dx^j
                           - rho^i_g C^g_ab
    Jacobi (cyclic sum):   sum over cyclic (a,b,g) of
                           [rho^i_a d(C^nu_bg)/dx^i + C^nu_am C^m_bg]
    """
    pts = _as_points(points, E.m)
    entries: list[ReportEntry] = []
    errors: list[dict] = []
    for x in pts:
        try:
            env = E.base_env(x)
            rj = E.rho_jets(env)
            cj = E.C_jets(env)
        except EvaluationError as exc:
            errors.append({"point": tuple(map(float, x)), "condition": "eval", "message": str(exc)})
            continue
        rv = np.array([[j.value for j in row] for row in rj]).reshape(E.m, E.n)
        cv = np.array(
            [[[j.value for j in row] for row in blk] for blk in cj]
        ).reshape(E.n, E.n, E.n)
        for i in range(E.m):
            for a in range(E.n):
                for b in range(a + 1, E.n):
                    t1 = sum(rv[j, a] * rj[i][b].grad[j] for j in range(E.m))
                    t2 = sum(rv[j, b] * rj[i][a].grad[j] for j in range(E.m))
                    t3 = float(rv[i] @ cv[:, a, b])
                    entries.append(
                        ReportEntry(
                            "anchor",
                            (i + 1, a + 1, b + 1),
                            tuple(map(float, x)),
                            float(t1 - t2 - t3),
                            float(1.0 + abs(t1) + abs(t2) + abs(t3)),
                        )
                    )
        for nu in range(E.n):
            for a in range(E.n):
                for b in range(a + 1, E.n):
                    for g in range(b + 1, E.n):
                        total = 0.0
                        mag = 1.0
                        for p, q, r in ((a, b, g), (b, g, a), (g, a, b)):
                            t_rho = sum(
                                rv[i, p] * cj[nu][q][r].grad[i] for i in range(E.m)
                            )
                            t_cc = float(cv[nu, p] @ cv[:, q, r])
                            total += t_rho + t_cc
                            mag += abs(t_rho) + abs(t_cc)
                        entries.append(
                            ReportEntry(
                                "jacobi",
                                (nu + 1, a + 1, b + 1, g + 1),
                                tuple(map(float, x)),
                                float(total),
                                float(mag),
                            )
                        )
    return Report(entries, tol, errors)


def dE_function(E: LieAlgebroid, f: Field) -> OneSection:
    """d^E f as a 1-section: theta_alpha = rho^i_alpha df/dx^i."""
    partials = [partial(f, name) for name in E.x_names]
    comps = tuple(
        fsum(fmul(E.rho[i][a], partials[i]) for i in range(E.m)) for a in range(E.n)
    )
    return OneSection(comps)


def dE_one_section(E: LieAlgebroid, theta: OneSection, x) -> np.ndarray:
    """Antisymmetrized coefficients of d^E theta at a base point."""
    if len(theta.components) != E.n:
        raise ValueError("section has wrong number of components")
    env = E.base_env(np.asarray(x, dtype=float))
    tj = [c.jet(env) for c in theta.components]
    rv = E.rho_values(env)
    cv = E.C_values(env)
    tv = np.array([j.value for j in tj])
    out = np.zeros((E.n, E.n))
    for b in range(E.n):
        for g in range(E.n):
            if b == g:
                continue
            acc = -float(tv @ cv[:, b, g])
            for i in range(E.m):
                acc += rv[i, b] * tj[g].grad[i] - rv[i, g] * tj[b].grad[i]
            out[b, g] = acc
    return out


@dataclass(frozen=True)
class KernelBasis:
    rank: int
    basis: np.ndarray  # (n, n - rank), columns span Ker rho(x)


def kernel_basis(E: LieAlgebroid, x) -> KernelBasis:
    """Kernel of the anchor at a base point.

    Declared kernel indices short-circuit to the exact coordinate basis;
    otherwise the numeric kernel comes from an SVD with relative threshold
    RANK_TOL on the singular values.
    """
    if E.kernel_indices is not None:
        basis = np.zeros((E.n, len(E.kernel_indices)))
        for col, idx in enumerate(sorted(E.kernel_indices)):
            basis[idx, col] = 1.0
        return KernelBasis(E.n - len(E.kernel_indices), basis)
    if E.m == 0 or E.n == 0:
        return KernelBasis(0, np.eye(E.n))
    env = E.base_env(np.asarray(x, dtype=float))
    rho = E.rho_values(env)
    _, s, vt = np.linalg.svd(rho)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > RANK_TOL * smax)) if smax > 0.0 else 0
    return KernelBasis(rank, vt[rank:].T)


def local_exactness_check(
    E: LieAlgebroid, theta: OneSection, points, tol: float = 1e-10
) -> Report:
    """Closedness plus kernel annihilation: the two clauses that make a
    1-section of a regular algebroid locally exact.

    Raises :class:`RegularityError` when the anchor rank jumps across the
    sampled points.
    """
    pts = _as_points(points, E.m)
    kernels = [kernel_basis(E, x) for x in pts]
    ranks = {k.rank for k in kernels}
    if len(ranks) > 1:
        raise RegularityError(
            f"anchor rank is not constant on the sampled region: ranks {sorted(ranks)}"
        )
    entries: list[ReportEntry] = []
    errors: list[dict] = []
    for x, ker in zip(pts, kernels):
        try:
            dmat = dE_one_section(E, theta, x)
            env = E.base_env(x)
            tv = np.array([c.jet(env).value for c in theta.components])
        except EvaluationError as exc:
            errors.append({"point": tuple(map(float, x)), "condition": "eval", "message": str(exc)})
            continue
        for b in range(E.n):
            for g in range(b + 1, E.n):
                entries.append(
                    ReportEntry("closed", (b + 1, g + 1), tuple(x), float(dmat[b, g]))
                )
        for k in range(ker.basis.shape[1]):
            entries.append(
                ReportEntry(
                    "kernel", (k + 1,), tuple(x), float(tv @ ker.basis[:, k])
                )
            )
    return Report(entries, tol, errors)


# ---------------------------------------------------------------------------
# builders


def tangent_bundle(m: int) -> LieAlgebroid:
    """The tangent bundle: identity anchor, vanishing bracket coefficients."""
    one, zero = fconst(1.0), fconst(0.0)
    rho = tuple(
        tuple(one if i == a else zero for a in range(m)) for i in range(m)
    )
    C = tuple(tuple(tuple(zero for _ in range(m)) for _ in range(m)) for _ in range(m))
    return LieAlgebroid(m, m, rho, C, kernel_indices=())


def _check_antisymmetric(c: np.ndarray, what: str) -> None:
    if not np.array_equal(c, -np.swapaxes(c, 1, 2)):
        raise ValueError(f"{what} must be antisymmetric in the lower index pair")


def lie_algebra(c) -> LieAlgebroid:
    """A Lie algebra as an algebroid over a point: zero anchor, constant
    bracket coefficients c[gamma][alpha][beta]."""
    c = np.asarray(c, dtype=float)
    if c.ndim != 3 or len(set(c.shape)) != 1:
        raise ValueError("structure constants must be an n*n*n array")
    _check_antisymmetric(c, "structure constants")
    n = c.shape[0]
    C = tuple(
        tuple(tuple(fconst(c[g, a, b]) for b in range(n)) for a in range(n))
        for g in range(n)
    )
    return LieAlgebroid(0, n, (), C, kernel_indices=tuple(range(n)))


def _jacobi_defect(c: np.ndarray) -> float:
    j = np.einsum("nam,mbg->nabg", c, c)
    total = j + np.transpose(j, (0, 2, 3, 1)) + np.transpose(j, (0, 3, 1, 2))
    return float(np.max(np.abs(total)))


@dataclass(frozen=True)
class AtiyahData:
    """Local data of a principal bundle: connection coefficients A^a_i(x)
    (n_g rows, m columns) and Lie algebra structure constants c^c_ab."""

    m: int
    n_g: int
    A: tuple[tuple[Field, ...], ...]
    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.shape != (self.n_g, self.n_g, self.n_g):
            raise ValueError("structure constants must have shape (n_g, n_g, n_g)")
        object.__setattr__(self, "c", c)
        _check_antisymmetric(c, "structure constants")
        scale = 1.0 + float(np.max(np.abs(c))) ** 2
        if _jacobi_defect(c) > 1e-12 * scale:
            raise ValueError("structure constants violate the Jacobi identity")
        if len(self.A) != self.n_g or any(len(row) != self.m for row in self.A):
            raise ValueError("connection table must be n_g rows of m fields")


def _curvature_field(D: AtiyahData, cc: int, i: int, j: int) -> Field:
    """B^c_ij = dA^c_j/dx^i - dA^c_i/dx^j - c^c_ab A^a_i A^b_j.

    Sign fixed by the bracket of the invariant basis fields (equivalently by
    the structure equations): [e'_i, e'_j] = -B^c_ij e'_c.
    """
    xi, xj = f"x{i + 1}", f"x{j + 1}"
    out = fsub(partial(D.A[cc][j], xi), partial(D.A[cc][i], xj))
    for a in range(D.n_g):
        for b in range(D.n_g):
            if D.c[cc, a, b] != 0.0:
                out = fsub(out, fmul(fconst(D.c[cc, a, b]), fmul(D.A[a][i], D.A[b][j])))
    return out


def atiyah_curvature(D: AtiyahData, x) -> np.ndarray:
    """Curvature values B^c_ij at a base point, antisymmetric in (i, j)."""
    env = env_at(tuple(f"x{i + 1}" for i in range(D.m)), x)
    out = np.zeros((D.n_g, D.m, D.m))
    for cc in range(D.n_g):
        for i in range(D.m):
            for j in range(D.m):
                if i != j:
                    out[cc, i, j] = _curvature_field(D, cc, i, j).jet(env).value
    return out


def atiyah_algebroid(D: AtiyahData) -> LieAlgebroid:
    """The Atiyah algebroid TQ/G of a locally trivial principal bundle.

    Fiber indices: the first m are horizontal (paired with the base
    coordinates), the last n_g are vertical and span the anchor kernel.
    Structure functions:

        C^a_ij  = -B^a_ij          C^c_ia = -C^c_ai = c^c_ab A^b_i
        C^c_ab  = c^c_ab           rho^j_i = delta_ij, all others 0
    """
    m, ng = D.m, D.n_g
    n = m + ng
    one, zero = fconst(1.0), fconst(0.0)
    rho = tuple(
        tuple(one if i == a else zero for a in range(n)) for i in range(m)
    )
    C = [[[zero for _ in range(n)] for _ in range(n)] for _ in range(n)]
    for cc in range(ng):
        g = m + cc
        for i in range(m):
            for j in range(m):
                if i != j:
                    C[g][i][j] = fneg(_curvature_field(D, cc, i, j))
        for i in range(m):
            for a in range(ng):
                entry = fsum(
                    fmul(fconst(D.c[cc, a, b]), D.A[b][i])
                    for b in range(ng)
                    if D.c[cc, a, b] != 0.0
                )
                C[g][i][m + a] = entry
                C[g][m + a][i] = fneg(entry)
        for a in range(ng):
            for b in range(ng):
                C[g][m + a][m + b] = fconst(D.c[cc, a, b])
    C_t = tuple(tuple(tuple(row) for row in blk) for blk in C)
    return LieAlgebroid(
        m, n, rho, C_t, kernel_indices=tuple(range(m, n)), atiyah=D
    )
