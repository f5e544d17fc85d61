"""The Lagrangian side: Euler-Lagrange residuals, SODEs of regular
Lagrangians, Legendre multiplier maps, energy, and local reconstruction of a
Lagrangian from a variational pair.

The Euler-Lagrange residual at a point, with the time derivative expanded
along the SODE flow, is

    res_a = d2L/dy^a dy^b Gamma^b + d2L/dy^a dx^i rho^i_b y^b
          - rho^i_a dL/dx^i + C^g_ab y^b dL/dy^g

so a SODE solves the equations exactly where the residual vanishes, and for
a regular Lagrangian res = g (Gamma_L - Gamma) with g the fiber Hessian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebroid import LieAlgebroid
from .exprlang import Expr, Num, Var, differentiate, eadd, emul, esub
from .fields import Env, Field
from .jets import EvaluationError, Jet2, constant_jet, jet_add, jet_mul, jet_solve
from .sampling import sample_points
from .sode import MultiplierMap, SodeSection, theta_fields

__all__ = [
    "DegenerateLagrangianError",
    "Lagrangian",
    "ReconstructedLagrangian",
    "ReconstructionError",
    "el_residual",
    "energy",
    "legendre",
    "reconstruct_lagrangian",
    "sode_from_lagrangian",
]

COND_MAX = 1e12


class DegenerateLagrangianError(RuntimeError):
    def __init__(self, cond: float, point):
        self.cond = cond
        self.point = tuple(np.asarray(point, dtype=float))
        super().__init__(
            f"fiber Hessian is singular at {self.point} (condition number {cond:.3e})"
        )


class ReconstructionError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


@dataclass(frozen=True)
class Lagrangian:
    """A scalar field L(x, y).  Regularity (invertible fiber Hessian) is
    checked where an operation needs it, not at construction."""

    L: Field


def _as_lagrangian(L) -> Lagrangian:
    return L if isinstance(L, Lagrangian) else Lagrangian(L)


def legendre(E: LieAlgebroid, L) -> MultiplierMap:
    """The Legendre multiplier map F_a = dL/dy^a, as symbolic fields.

    Requires an expression-backed Lagrangian: downstream Helmholtz residuals
    differentiate F twice more, i.e. need third derivatives of L, which a
    single second-order jet of an opaque L cannot supply.
    """
    L = _as_lagrangian(L)
    if not isinstance(L.L, Expr):
        raise TypeError("legendre needs an expression-backed Lagrangian")
    return MultiplierMap(tuple(differentiate(L.L, name) for name in E.y_names))


def energy(E: LieAlgebroid, L, point) -> float:
    """E_L = y^a dL/dy^a - L."""
    L = _as_lagrangian(L)
    env = E.full_env(point)
    j = L.L.jet(env)
    y = np.asarray(point, dtype=float)[E.m :]
    return float(y @ j.grad[E.m :]) - j.value


def _gamma_values(gamma, env, n: int) -> np.ndarray:
    if isinstance(gamma, SodeSection):
        return np.array([g.jet(env).value for g in gamma.components])
    vals = np.asarray(gamma, dtype=float)
    if vals.shape != (n,):
        raise ValueError("SODE values must have length n")
    return vals


def el_residual(E: LieAlgebroid, L, gamma, point) -> np.ndarray:
    """Euler-Lagrange residual vector at a point; zero iff Gamma solves the
    equations of L there."""
    L = _as_lagrangian(L)
    pt = np.asarray(point, dtype=float)
    env = E.full_env(pt)
    j = L.L.jet(env)
    rv = E.rho_values(env)
    cv = E.C_values(env)
    y = pt[E.m :]
    gv = _gamma_values(gamma, env, E.n)
    m, n = E.m, E.n
    res = np.zeros(n)
    for a in range(n):
        acc = float(j.hess[m + a, m:] @ gv)
        acc += float(j.hess[m + a, :m] @ (rv @ y))
        acc -= float(rv[:, a] @ j.grad[:m])
        acc += float(np.einsum("gb,b,g->", cv[:, a, :], y, j.grad[m:]))
        res[a] = acc
    return res


class _ImplicitSode:
    """Shared per-point solver for g * Gamma = r with expression-backed
    coefficient fields; jets of Gamma come from implicit differentiation."""

    def __init__(self, g_fields, r_fields, n: int):
        self.g_fields = g_fields
        self.r_fields = r_fields
        self.n = n

    def jets(self, env: Env) -> list[Jet2]:
        memo = env._memo
        key = id(self)
        hit = memo.get(key)
        if hit is not None and hit[0] is self:
            return hit[1]
        g = [[f.jet(env) for f in row] for row in self.g_fields]
        r = [f.jet(env) for f in self.r_fields]
        out = jet_solve(g, r)
        memo[key] = (self, out)
        return out


class _ImplicitSodeField(Field):
    __slots__ = ("solver", "index")

    def __init__(self, solver: _ImplicitSode, index: int):
        self.solver = solver
        self.index = index

    def _jet(self, env: Env) -> Jet2:
        return self.solver.jets(env)[self.index]


def _el_system_fields(E: LieAlgebroid, L: Lagrangian):
    """Symbolic fiber Hessian g and right-hand side r of g * Gamma = r."""
    if not isinstance(L.L, Expr):
        raise TypeError("sode_from_lagrangian needs an expression-backed Lagrangian")
    zero = Num(0.0)
    ly = [differentiate(L.L, name) for name in E.y_names]
    g_fields = [[differentiate(ly[a], name) for name in E.y_names] for a in range(E.n)]
    yvars = [Var(name) for name in E.y_names]
    r_fields = []
    for a in range(E.n):
        acc = zero
        for i in range(E.m):
            if isinstance(E.rho[i][a], Expr):
                acc = eadd(acc, emul(E.rho[i][a], differentiate(L.L, E.x_names[i])))
            else:  # pragma: no cover - builders keep rho symbolic
                raise TypeError("anchor fields must be expressions")
        for g in range(E.n):
            for b in range(E.n):
                acc = esub(acc, emul(E.C[g][a][b], emul(yvars[b], ly[g])))
        for i in range(E.m):
            lyx = differentiate(ly[a], E.x_names[i])
            for b in range(E.n):
                acc = esub(acc, emul(lyx, emul(E.rho[i][b], yvars[b])))
        r_fields.append(acc)
    return g_fields, r_fields


def sode_from_lagrangian(E: LieAlgebroid, L, point=None):
    """The SODE of a regular Lagrangian.

    With a point, returns the Gamma values there (raising
    :class:`DegenerateLagrangianError` if the fiber Hessian is singular).
    Without one, returns a :class:`SodeSection` whose components evaluate
    jets by implicit differentiation, usable everywhere a parsed SODE is.
    """
    L = _as_lagrangian(L)
    g_fields, r_fields = _el_system_fields(E, L)
    solver = _ImplicitSode(g_fields, r_fields, E.n)
    if point is None:
        return SodeSection(
            tuple(_ImplicitSodeField(solver, a) for a in range(E.n))
        )
    pt = np.asarray(point, dtype=float)
    env = E.full_env(pt)
    gv = np.array([[f.jet(env).value for f in row] for row in g_fields]).reshape(E.n, E.n)
    cond = float(np.linalg.cond(gv)) if E.n else 1.0
    if not np.isfinite(cond) or cond > COND_MAX:
        raise DegenerateLagrangianError(cond, pt)
    return np.array([j.value for j in solver.jets(env)])


# ---------------------------------------------------------------------------
# reconstruction


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


def _adaptive_quad(fn, a: float, b: float, tol: float, depth: int = 0) -> np.ndarray:
    """Adaptive 10-point Gauss-Legendre quadrature of a vector-valued smooth
    integrand; subdivides until the two-half refinement moves the result by
    less than tol."""
    nodes, weights = _GL_NODES, _GL_WEIGHTS

    def gl(lo, hi):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        acc = None
        for t, w in zip(nodes, weights):
            val = fn(mid + half * t) * (w * half)
            acc = val if acc is None else acc + val
        return acc

    whole = gl(a, b)
    mid = 0.5 * (a + b)
    halves = gl(a, mid) + gl(mid, b)
    err = float(np.max(np.abs(halves - whole)))
    if err <= tol or depth >= 12:
        return halves
    left = _adaptive_quad(fn, a, mid, tol / 2, depth + 1)
    right = _adaptive_quad(fn, mid, b, tol / 2, depth + 1)
    return left + right


def _pack(j: Jet2) -> np.ndarray:
    return np.concatenate([[j.value], j.grad, j.hess.ravel()])


def _unpack(v: np.ndarray, d: int) -> Jet2:
    return Jet2(float(v[0]), v[1 : 1 + d].copy(), v[1 + d :].reshape(d, d).copy())


class ReconstructedLagrangian(Field):
    """Numeric evaluator of the reconstructed Lagrangian

        L(x, y) = integral_0^1 F_a(x, s y + (1-s) y0) (y - y0)^a ds + h(x)

    pinned to zero at (basepoint, y0).  In full-rank-square mode h comes from
    line-integrating grad h = rho^{-T} theta(., y0) from the basepoint along
    coordinate axes; on zero-anchor algebroids h vanishes.  Jets are exact:
    the fiber integral is integrated jet-wise, grad h is evaluated directly
    (no quadrature) and its derivative by implicit differentiation of
    rho^T grad h = theta.
    """

    def __init__(self, E: LieAlgebroid, gamma: SodeSection, F: MultiplierMap,
                 basepoint, mode: str, y0=None, quad_tol: float = 1e-10,
                 path_tol: float = 1e-6):
        self.E = E
        self.F = F
        self.mode = mode
        self.quad_tol = quad_tol
        self.path_tol = path_tol
        self.x0 = np.asarray(basepoint, dtype=float).reshape(E.m)
        self.y0 = np.zeros(E.n) if y0 is None else np.asarray(y0, dtype=float).reshape(E.n)
        self.theta = theta_fields(E, gamma, F).theta

    # -- fiber integral ----------------------------------------------------
    def _fiber_jet(self, env: Env) -> Jet2:
        E, d = self.E, env.d
        x_jets = {name: env.lookup(name) for name in E.x_names}
        y_jets = [env.lookup(name) for name in E.y_names]

        def integrand(s: float) -> np.ndarray:
            bindings = dict(x_jets)
            for b, name in enumerate(E.y_names):
                affine = Jet2(
                    s * y_jets[b].value + (1.0 - s) * self.y0[b],
                    s * y_jets[b].grad,
                    s * y_jets[b].hess,
                )
                bindings[name] = affine
            inner = Env(d, bindings)
            total = constant_jet(0.0, d)
            for a in range(E.n):
                fa = self.F.components[a].jet(inner)
                diff = jet_add(y_jets[a], constant_jet(-self.y0[a], d))
                total = jet_add(total, jet_mul(fa, diff))
            return _pack(total)

        return _unpack(_adaptive_quad(integrand, 0.0, 1.0, self.quad_tol), d)

    def _const_env(self, x: np.ndarray, y: np.ndarray) -> Env:
        """Zero-dimensional environment: values only, no derivative passengers."""
        E = self.E
        bindings = {name: constant_jet(x[i], 0) for i, name in enumerate(E.x_names)}
        bindings.update(
            {name: constant_jet(y[b], 0) for b, name in enumerate(E.y_names)}
        )
        return Env(0, bindings)

    @staticmethod
    def _solve_anchor(rv_t: np.ndarray, rhs: np.ndarray, x) -> np.ndarray:
        try:
            return np.linalg.solve(rv_t, rhs)
        except np.linalg.LinAlgError:
            raise ReconstructionError(
                "anchor became singular on the reconstruction region",
                {"point": tuple(map(float, x))},
            ) from None

    # -- base part ---------------------------------------------------------
    def _w(self, x: np.ndarray) -> np.ndarray:
        """w = rho^{-T} theta(x, y0), the gradient field of h (values only)."""
        E = self.E
        env = self._const_env(x, self.y0)
        rv = E.rho_values(env)
        tv = np.array([f.jet(env).value for f in self.theta])
        return self._solve_anchor(rv.T, tv, x)

    def _w_and_grad(self, x: np.ndarray):
        """w plus its x-derivative, from rho^T dw = dtheta - (d rho^T) w."""
        E = self.E
        env = E.full_env(np.concatenate([x, self.y0]))
        rho_j = E.rho_jets(env)
        rv = np.array([[j.value for j in row] for row in rho_j]).reshape(E.m, E.n)
        tj = [f.jet(env) for f in self.theta]
        tv = np.array([j.value for j in tj])
        w = self._solve_anchor(rv.T, tv, x)
        dw = np.zeros((E.m, E.m))  # dw[i, j] = d w_i / d x_j
        for j in range(E.m):
            dtheta = np.array([t.grad[j] for t in tj])
            drho_t = np.array(
                [[rho_j[i][a].grad[j] for i in range(E.m)] for a in range(E.n)]
            )
            dw[:, j] = self._solve_anchor(rv.T, dtheta - drho_t @ w, x)
        return w, dw

    def _h_value(self, x: np.ndarray, order) -> float:
        """Line integral of w along coordinate axes in the given order."""
        total = 0.0
        current = self.x0.copy()
        for k in order:
            a, b = self.x0[k], x[k]
            if a == b:
                current[k] = b
                continue

            def wk(t: float, k=k, current=current.copy()) -> np.ndarray:
                pt = current
                pt[k] = t
                return np.array([self._w(pt)[k]])

            total += float(_adaptive_quad(wk, a, b, self.quad_tol)[0])
            current[k] = b
        return total

    def check_path(self, x) -> None:
        """Compare the coordinate-axis line integral with the reversed-order
        path; a discrepancy means the base 1-form is not closed (failing
        third Helmholtz block) and the reconstruction is invalid."""
        if self.mode == "zero_anchor" or self.E.m == 0:
            return
        x = np.asarray(x, dtype=float).reshape(self.E.m)
        forward = self._h_value(x, range(self.E.m))
        backward = self._h_value(x, range(self.E.m - 1, -1, -1))
        if abs(forward - backward) > self.path_tol:
            raise ReconstructionError(
                "base line integral is path-dependent: the data fail closedness",
                {"forward": forward, "backward": backward, "point": tuple(map(float, x))},
            )

    def _base_jet(self, env: Env) -> Jet2:
        E, d = self.E, env.d
        if self.mode == "zero_anchor" or E.m == 0:
            return constant_jet(0.0, d)
        x = np.array([env.lookup(name).value for name in E.x_names])
        for name in E.x_names:
            j = env.lookup(name)
            if np.count_nonzero(j.grad) != 1 or j.hess.any():
                raise EvaluationError(
                    "reconstruct", "reconstructed Lagrangians evaluate at seeded points"
                )
        forward = self._h_value(x, range(E.m))
        w, dw = self._w_and_grad(x)
        grad = np.zeros(d)
        hess = np.zeros((d, d))
        for i, name in enumerate(E.x_names):
            gi = env.lookup(name).grad
            ki = int(np.argmax(gi))
            grad[ki] = w[i]
            for j, name2 in enumerate(E.x_names):
                kj = int(np.argmax(env.lookup(name2).grad))
                hess[ki, kj] = 0.5 * (dw[i, j] + dw[j, i])
        return Jet2(forward, grad, hess)

    def _jet(self, env: Env) -> Jet2:
        return jet_add(self._fiber_jet(env), self._base_jet(env))

    def jet_at(self, point) -> Jet2:
        return self.jet(self.E.full_env(point))

    def value_at(self, point) -> float:
        """Value alone, via zero-dimensional jets (no derivative cost)."""
        E = self.E
        pt = np.asarray(point, dtype=float).reshape(E.m + E.n)
        x, y = pt[: E.m], pt[E.m :]
        value = self._fiber_jet(self._const_env(x, y)).value
        if self.mode != "zero_anchor" and E.m:
            value += self._h_value(x, range(E.m))
        return value


def reconstruct_lagrangian(
    E: LieAlgebroid,
    gamma: SodeSection,
    F: MultiplierMap,
    basepoint,
    mode: str,
    y0=None,
    box: tuple[float, float] = (-1.0, 1.0),
    verify_count: int = 20,
    seed: int = 11,
    quad_tol: float = 1e-10,
    verify_tol: float = 1e-6,
) -> ReconstructedLagrangian:
    """Reconstruct a local Lagrangian from a variational pair (Gamma, F).

    Modes: ``zero_anchor`` (Lie algebras: the base part vanishes) and
    ``full_rank_square`` (m = n with invertible anchor: the base part is a
    line integral).  The result is verified at fresh sample points:
    dL/dy^a must reproduce F_a and the Euler-Lagrange residual of (L, Gamma)
    must vanish within ``verify_tol``; any failure (including a
    path-dependent base integral, the fingerprint of non-closed data) raises
    :class:`ReconstructionError` with diagnostics.
    """
    if mode not in ("zero_anchor", "full_rank_square"):
        raise ValueError(f"unknown reconstruction mode '{mode}'")
    basepoint = np.asarray(basepoint, dtype=float).reshape(E.m)
    pts = sample_points(E.m, E.n, verify_count, box[0], box[1], seed=seed)
    if mode == "zero_anchor":
        for pt in pts[: min(len(pts), 5)]:
            env = E.full_env(pt)
            if E.m and float(np.max(np.abs(E.rho_values(env)))) > 0.0:
                raise ReconstructionError("zero_anchor mode requires a vanishing anchor")
    else:
        if E.m != E.n:
            raise ReconstructionError("full_rank_square mode requires m = n")
        for x in [basepoint] + [pt[: E.m] for pt in pts[:5]]:
            env = E.full_env(np.concatenate([x, np.zeros(E.n)]))
            rv = E.rho_values(env)
            if not np.isfinite(np.linalg.cond(rv)) or np.linalg.cond(rv) > COND_MAX:
                raise ReconstructionError(
                    "full_rank_square mode requires an invertible anchor on the region"
                )
    rec = ReconstructedLagrangian(
        E, gamma, F, basepoint, mode, y0=y0, quad_tol=quad_tol, path_tol=verify_tol
    )
    for pt in pts[: min(len(pts), 5)]:
        rec.check_path(pt[: E.m])
    worst_grad = 0.0
    worst_el = 0.0
    for pt in pts:
        env = E.full_env(pt)
        j = rec.jet(env)
        fv = np.array([f.jet(env).value for f in F.components])
        worst_grad = max(worst_grad, float(np.max(np.abs(j.grad[E.m :] - fv))))
        res = el_residual(E, rec, gamma, pt)
        worst_el = max(worst_el, float(np.max(np.abs(res))) if res.size else 0.0)
    if worst_grad > verify_tol or worst_el > verify_tol:
        raise ReconstructionError(
            "reconstructed Lagrangian failed verification",
            {"max_dLdy_vs_F": worst_grad, "max_el_residual": worst_el},
        )
    return rec
