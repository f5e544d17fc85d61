import numpy as np
import pytest

from algvar.algebroid import AtiyahData, atiyah_algebroid, lie_algebra, tangent_bundle
from algvar.exprlang import Num, parse
from algvar.sampling import sample_points
from algvar.sode import (
    Classification,
    MultiplierMap,
    SodeSection,
    atiyah_reduced_residuals,
    classify,
    classify_full,
    connection_quantities,
    helmholtz_residuals,
    kernel_condition,
    horizontal_helmholtz_residuals,
    sode_derivative,
    theta_components,
)
from algvar.variational import Lagrangian, legendre, sode_from_lagrangian

from conftest import random_atiyah, random_regular_lagrangian, se2_constants

R_BLOCKS = ("R1", "R2", "R3")
P_BLOCKS = ("P1", "P2", "P3", "P4")


def pts_for(E, count=24, seed=0):
    return sample_points(E.m, E.n, count, -1.0, 1.0, seed, exclude_y_ball=0.1)


# ---------------------------------------------------------------------------
# SODE derivative and theta


def test_sode_derivative_fiber_coordinate(se2_forced):
    se2, gamma, _ = se2_forced
    pt = [0.3, -0.7, 0.4]
    env = se2.full_env(pt)
    expected = gamma.components[0].jet(env).value
    assert sode_derivative(se2, gamma, parse("y1"), pt) == expected


def test_sode_derivative_base_coordinate():
    E = tangent_bundle(2)
    gamma = SodeSection((Num(0.0), Num(0.0)))
    assert sode_derivative(E, gamma, parse("x1"), [0.5, 0.2, 1.5, -0.4]) == 1.5


def test_sode_derivative_constant_on_lie_algebra(se2_forced):
    se2, gamma, _ = se2_forced
    assert sode_derivative(se2, gamma, Num(4.0), [0.1, 0.2, 0.3]) == 0.0


def test_theta_se2_forced_values(se2_forced):
    se2, gamma, F = se2_forced
    for pt in sample_points(0, 3, 10, -1, 1, seed=1):
        tv = theta_components(se2, gamma, F, pt)
        assert abs(tv.theta[0]) < 1e-15
        assert abs(tv.theta[1]) < 1e-15
        assert abs(tv.theta[2] - 1.0) < 1e-15


def test_theta_free_particle_zero():
    E = tangent_bundle(2)
    L = Lagrangian(parse("(y1^2 + y2^2)/2"))
    F = legendre(E, L)
    gamma = SodeSection((Num(0.0), Num(0.0)))
    tv = theta_components(E, gamma, F, [0.3, 0.1, 0.7, -0.2])
    assert not tv.theta.any()


# ---------------------------------------------------------------------------
# Helmholtz blocks: reference examples and independent classical oracle


def test_helmholtz_se2_forced_zero(se2_forced):
    se2, gamma, F = se2_forced
    rep = helmholtz_residuals(se2, gamma, F, pts_for(se2), 1e-12)
    for name in R_BLOCKS:
        assert rep.block_max(name) == 0.0
    assert not rep.degenerate_points


def test_helmholtz_lagrangian_derived_small():
    E = tangent_bundle(2)
    L = Lagrangian(parse("(1 + 0.2*x1^2)*y1^2/2 + y2^2/2 + 0.1*x2*y1*y2 - x1*x2"))
    F = legendre(E, L)
    gamma = sode_from_lagrangian(E, L)
    rep = helmholtz_residuals(E, gamma, F, pts_for(E), 1e-10)
    for name in R_BLOCKS:
        assert rep.block_max(name) < 1e-10


def test_helmholtz_damped_fails_in_r2():
    E = tangent_bundle(1)
    gamma = SodeSection((parse("-y1"),))
    F = MultiplierMap((parse("y1"),))
    rep = helmholtz_residuals(E, gamma, F, pts_for(E, 8), 1e-8)
    assert rep.block_max("R2") == pytest.approx(1.0)
    assert not rep.block_passes("R2")


def _value(field, E, pt):
    return field.jet(E.full_env(pt)).value


def _classical_tangent_residuals(E, gamma, F, pt, h=1e-4):
    """Independently coded classical Helmholtz conditions on a tangent
    bundle, from plain value finite differences (no jets, no theta fields):

        R1: dF_b/dy^g - dF_g/dy^b
        R2: d(Gamma(F_g))/dy^b - dF_b/dx^g
        R3: d(Gamma(F_g))/dx^b - d(Gamma(F_b))/dx^g
    """
    m = E.m

    def ev(field, p):
        return _value(field, E, p)

    def d(idx, fn, p):
        e = np.zeros(2 * m)
        e[idx] = h
        return (fn(p + e) - fn(p - e)) / (2 * h)

    def sode_apply(field):
        def fn(p):
            x, y = p[:m], p[m:]
            total = 0.0
            for i in range(m):
                total += y[i] * d(i, lambda q: ev(field, q), p)
            for a in range(m):
                total += ev(gamma.components[a], p) * d(m + a, lambda q: ev(field, q), p)
            return total

        return fn

    theta = [sode_apply(F.components[g]) for g in range(m)]
    r1 = np.zeros((m, m))
    r2 = np.zeros((m, m))
    r3 = np.zeros((m, m))
    for b in range(m):
        for g in range(m):
            r1[b, g] = d(m + g, lambda q: ev(F.components[b], q), pt) - d(
                m + b, lambda q: ev(F.components[g], q), pt
            )
            r2[b, g] = d(m + b, theta[g], pt) - d(g, lambda q: ev(F.components[b], q), pt)
            r3[b, g] = d(b, theta[g], pt) - d(g, theta[b], pt)
    return r1, r2, r3


@pytest.mark.parametrize(
    "gamma_src,f_src",
    [
        (("-x1", "-x2"), ("y1", "y2")),                      # harmonic: all zero
        (("x2*y2^2", "-y1"), ("y1 + x2*y2", "y2")),          # generic nonzero
        (("-y1", "0"), ("y1", "y2")),                        # damped block
    ],
)
def test_tangent_bundle_reduction_matches_classical(gamma_src, f_src):
    E = tangent_bundle(2)
    gamma = SodeSection(tuple(parse(s) for s in gamma_src))
    F = MultiplierMap(tuple(parse(s) for s in f_src))
    pts = sample_points(2, 2, 4, -0.8, 0.8, seed=3, exclude_y_ball=0.1)
    rep = helmholtz_residuals(E, gamma, F, pts, 1e-8)
    by_key = {}
    for name in R_BLOCKS:
        for e in rep.blocks[name]:
            by_key[(name, e.indices, e.point)] = e.residual
    for pt in pts:
        r1, r2, r3 = _classical_tangent_residuals(E, gamma, F, pt)
        key_pt = tuple(pt)
        for b in range(2):
            for g in range(2):
                assert by_key[("R2", (b + 1, g + 1), key_pt)] == pytest.approx(
                    r2[b, g], abs=5e-6
                )
                if b < g:
                    assert by_key[("R1", (b + 1, g + 1), key_pt)] == pytest.approx(
                        r1[b, g], abs=5e-6
                    )
                    assert by_key[("R3", (b + 1, g + 1), key_pt)] == pytest.approx(
                        r3[b, g], abs=5e-6
                    )


def test_lie_algebra_reduction_closed_forms(se2_forced):
    # on a Lie algebra the blocks collapse to closed forms:
    # R2_bg = d(g_gt Gamma^t + C^r_gt F_r y^t)/dy^b, R3_bg = -theta_a C^a_bg
    se2, gamma, F = se2_forced
    cv = se2.C_values(se2.base_env([]))
    pts = sample_points(0, 3, 4, -0.9, 0.9, seed=7)
    rep = helmholtz_residuals(se2, gamma, F, pts, 1e-8)
    by_key = {}
    for name in R_BLOCKS:
        for e in rep.blocks[name]:
            by_key[(name, e.indices, e.point)] = e.residual
    h = 1e-5

    def theta_val(g, y):
        total = 0.0
        env = se2.full_env(y)
        for t in range(3):
            total += F.components[g].jet(env).grad[t] * gamma.components[t].jet(env).value
        for r in range(3):
            for t in range(3):
                total += cv[r, g, t] * F.components[r].jet(env).value * y[t]
        return total

    for pt in pts:
        for b in range(3):
            for g in range(3):
                e = np.zeros(3)
                e[b] = h
                fd = (theta_val(g, pt + e) - theta_val(g, pt - e)) / (2 * h)
                assert by_key[("R2", (b + 1, g + 1), tuple(pt))] == pytest.approx(fd, abs=1e-7)
                if b < g:
                    expected = -sum(theta_val(a, pt) * cv[a, b, g] for a in range(3))
                    assert by_key[("R3", (b + 1, g + 1), tuple(pt))] == pytest.approx(
                        expected, abs=1e-9
                    )


def test_kernel_annihilation_makes_last_conditions_true():
    # Euler-Poincare data: theta vanishes identically, so R2 and R3 vanish too
    se2 = lie_algebra(se2_constants())
    L = Lagrangian(parse("(y1^2 + y2^2 + y3^2)/2"))
    F = legendre(se2, L)
    gamma = sode_from_lagrangian(se2, L)
    pts = pts_for(se2, 16)
    rep = classify_full(se2, gamma, F, pts, 1e-10)
    assert rep.block_max("K") < 1e-12
    assert rep.block_max("R2") < 1e-12
    assert rep.block_max("R3") < 1e-12


# ---------------------------------------------------------------------------
# kernel condition and classification


def test_kernel_se2_forced(se2_forced):
    se2, gamma, F = se2_forced
    rep = kernel_condition(se2, gamma, F, pts_for(se2, 8), 1e-12)
    values = {e.indices: e.residual for e in rep.entries if e.point == tuple(pts_for(se2, 8)[0])}
    assert values[(1,)] == pytest.approx(0.0, abs=1e-15)
    assert values[(2,)] == pytest.approx(0.0, abs=1e-15)
    assert values[(3,)] == pytest.approx(1.0)


def test_kernel_vacuous_on_tangent_bundle():
    E = tangent_bundle(2)
    gamma = SodeSection((Num(0.0), Num(0.0)))
    F = MultiplierMap((parse("y1"), parse("y2")))
    rep = kernel_condition(E, gamma, F, pts_for(E, 6), 1e-10)
    assert rep.entries == []
    assert rep.passed


def test_classify_matrix(se2_forced):
    se2, gamma, F = se2_forced
    assert classify(se2, gamma, F, pts_for(se2), 1e-8) == Classification.WEAK_VARIATIONAL

    E = tangent_bundle(3)
    L = Lagrangian(parse("(y1^2 + y2^2 + y3^2)/2 + x3"))
    assert (
        classify(E, sode_from_lagrangian(E, L), legendre(E, L), pts_for(E), 1e-9)
        == Classification.VARIATIONAL
    )

    E1 = tangent_bundle(1)
    assert (
        classify(E1, SodeSection((parse("-y1"),)), MultiplierMap((parse("y1"),)),
                 pts_for(E1, 8), 1e-8)
        == Classification.FAILS
    )
    assert (
        classify(E1, SodeSection((Num(0.0),)), MultiplierMap((Num(1.0),)),
                 pts_for(E1, 8), 1e-8)
        == Classification.DEGENERATE
    )


def test_kernel_labels_present(se2_forced):
    se2, gamma, F = se2_forced
    rep = helmholtz_residuals(se2, gamma, F, pts_for(se2, 4), 1e-8)
    assert all(e.label == "II" for e in rep.blocks["R1"])
    assert "theta_kernel_y" in rep.diagnostics
    assert all(abs(e.residual) < 1e-12 for e in rep.diagnostics["theta_kernel_y"])


# ---------------------------------------------------------------------------
# connection quantities and the horizontal-basis blocks


def test_connection_quantities_flat():
    E = tangent_bundle(2)
    gamma = SodeSection((Num(0.0), Num(0.0)))
    lam, dd, phi = connection_quantities(E, gamma, [0.1, 0.2, 0.3, 0.4])
    assert not lam.any() and not dd.any() and not phi.any()


def test_d_plus_lambda_is_yc(se2_forced):
    # the identity that does hold: D + Lambda = y^b C^g_{b eta}
    se2, gamma, _ = se2_forced
    cv = se2.C_values(se2.base_env([]))
    for pt in sample_points(0, 3, 5, -1, 1, seed=9):
        lam, dd, _ = connection_quantities(se2, gamma, pt)
        yc = np.einsum("b,gbe->ge", pt, cv)
        assert np.allclose(lam + dd, yc, atol=1e-14)
    E = tangent_bundle(2)
    gam2 = SodeSection((parse("x1*y2^2"), parse("-y1")))
    for pt in sample_points(2, 2, 4, -1, 1, seed=2):
        lam, dd, _ = connection_quantities(E, gam2, pt)
        assert np.allclose(lam + dd, 0.0, atol=1e-14)  # C = 0 here


def test_phi_closed_form_on_lie_algebras(se2_forced):
    # on a Lie algebra the displayed closed form of Phi (x-derivative terms
    # dropped, Lambda substituted) must agree with the built fields
    se2, gamma, _ = se2_forced
    cv = se2.C_values(se2.base_env([]))

    def reduced_phi(y):
        env = se2.full_env(y)
        gj = [g.jet(env) for g in gamma.components]
        gv = np.array([j.value for j in gj])
        dg = np.array([j.grad for j in gj])  # dg[g, a] = dGamma^g/dy^a
        d2g = np.array([j.hess for j in gj])
        out = np.zeros((3, 3))
        for g in range(3):
            for e in range(3):
                acc = 0.0
                for a in range(3):
                    acc += 0.5 * gv[a] * d2g[g][a, e]
                    acc -= 0.5 * gv[a] * cv[g, e, a]
                for nn in range(3):
                    acc -= 0.25 * dg[nn, e] * dg[g, nn]
                    acc -= 0.25 * float(cv[nn, e] @ y) * float(cv[g, nn] @ y)
                    acc -= 0.25 * dg[nn, e] * float(cv[g, nn] @ y)
                    acc += 0.75 * float(cv[nn, e] @ y) * dg[g, nn]
                out[g, e] = acc
        return out

    for y in sample_points(0, 3, 5, -1, 1, seed=4):
        _, _, phi = connection_quantities(se2, gamma, y)
        assert np.allclose(phi, reduced_phi(y), atol=1e-12)


def test_horizontal_blocks_se2_forced_all_zero(se2_forced):
    se2, gamma, F = se2_forced
    rep = horizontal_helmholtz_residuals(se2, gamma, F, pts_for(se2, 16), 1e-12)
    for name in P_BLOCKS:
        assert rep.block_max(name) == 0.0, name


def test_horizontal_blocks_lagrangian_derived():
    E = tangent_bundle(2)
    L = Lagrangian(parse("(1 + 0.2*x1^2)*y1^2/2 + y2^2/2 + 0.1*x2*y1*y2 - x1^3"))
    F = legendre(E, L)
    gamma = sode_from_lagrangian(E, L)
    rep = horizontal_helmholtz_residuals(E, gamma, F, pts_for(E, 16), 1e-9)
    for name in P_BLOCKS:
        assert rep.block_max(name) < 1e-9, name


def test_horizontal_blocks_damped_fails():
    E = tangent_bundle(1)
    gamma = SodeSection((parse("-y1"),))
    F = MultiplierMap((parse("y1"),))
    rep = horizontal_helmholtz_residuals(E, gamma, F, pts_for(E, 8), 1e-8)
    assert rep.block_max("P4") == pytest.approx(1.0)
    assert not rep.all_pass(P_BLOCKS)


def test_r_p_equivalence_mixed_corpus(se2_forced):
    se2, gamma, F = se2_forced
    cases = [(se2, gamma, F)]
    E = tangent_bundle(2)
    cases.append(
        (E, SodeSection((parse("-y1"), parse("x1*y2"))), MultiplierMap((parse("y1"), parse("y2"))))
    )
    L = Lagrangian(parse("(y1^2 + y2^2)/2 - x1*x2"))
    cases.append((E, sode_from_lagrangian(E, L), legendre(E, L)))
    for Ec, g, f in cases:
        pts = pts_for(Ec, 12)
        r = helmholtz_residuals(Ec, g, f, pts, 1e-8)
        p = horizontal_helmholtz_residuals(Ec, g, f, pts, 1e-8)
        assert r.all_pass(R_BLOCKS) == p.all_pass(P_BLOCKS)


# ---------------------------------------------------------------------------
# Atiyah reduced conditions


def test_atiyah_reduced_requires_atiyah(se2_forced):
    se2, gamma, F = se2_forced
    with pytest.raises(ValueError):
        atiyah_reduced_residuals(se2, gamma, F, pts_for(se2, 4), 1e-8)


def test_atiyah_reduced_direct_product():
    D = AtiyahData(1, 1, ((Num(0.0),),), np.zeros((1, 1, 1)))
    E = atiyah_algebroid(D)
    L = Lagrangian(parse("(y1^2 + y2^2)/2"))
    gamma = sode_from_lagrangian(E, L)
    F = legendre(E, L)
    rep = atiyah_reduced_residuals(E, gamma, F, pts_for(E, 12), 1e-10)
    assert rep.all_pass(("A1", "A2", "A3", "A4"))
    assert rep.all_pass(("I1", "I2", "I3"))


def test_atiyah_reduced_equivalence_random_models():
    rng = np.random.default_rng(41)
    for _ in range(4):
        E = atiyah_algebroid(random_atiyah(rng))
        L = random_regular_lagrangian(rng, E)
        gamma = sode_from_lagrangian(E, L)
        F = legendre(E, L)
        pts = pts_for(E, 10)
        reduced = atiyah_reduced_residuals(E, gamma, F, pts, 1e-8)
        cls = classify(E, gamma, F, pts, 1e-8)
        assert reduced.all_pass(("A1", "A2", "A3", "A4")) == (
            cls == Classification.VARIATIONAL
        )
        assert cls == Classification.VARIATIONAL


def test_atiyah_theta_constant_fixture():
    # constant-forcing forcing inside an Atiyah algebroid: the reduced set
    # fails exactly in the theta_a block while the Helmholtz blocks pass
    D = AtiyahData(1, 1, ((Num(0.0),),), np.zeros((1, 1, 1)))
    E = atiyah_algebroid(D)
    gamma = SodeSection((Num(0.0), Num(1.0)))
    F = MultiplierMap((parse("y1"), parse("y2")))
    pts = pts_for(E, 12)
    rep = atiyah_reduced_residuals(E, gamma, F, pts, 1e-8)
    assert rep.block_passes("A1") and rep.block_passes("A2") and rep.block_passes("A3")
    assert not rep.block_passes("A4")
    assert rep.block_max("A4") == pytest.approx(1.0)
    helm = helmholtz_residuals(E, gamma, F, pts, 1e-8)
    assert helm.all_pass(R_BLOCKS)


def test_atiyah_implied_blocks_pass_when_theta_vanishes():
    rng = np.random.default_rng(53)
    E = atiyah_algebroid(random_atiyah(rng))
    L = random_regular_lagrangian(rng, E)
    rep = atiyah_reduced_residuals(
        E, sode_from_lagrangian(E, L), legendre(E, L), pts_for(E, 8), 1e-8
    )
    assert rep.block_passes("A4")
    for name in ("I1", "I2", "I3"):
        assert name in rep.blocks
        assert rep.block_passes(name)


def test_block_antisymmetry_structure(se2_forced):
    # antisymmetric blocks are stored once per unordered pair
    se2, gamma, F = se2_forced
    rep = classify_full(se2, gamma, F, pts_for(se2, 4), 1e-8)
    for name in ("R1", "R3"):
        for e in rep.blocks[name]:
            assert e.indices[0] < e.indices[1]
    hor = horizontal_helmholtz_residuals(se2, gamma, F, pts_for(se2, 4), 1e-8)
    for name in ("P1", "P2", "P3"):
        for e in hor.blocks[name]:
            assert e.indices[0] < e.indices[1]
    # P4 keeps the diagonal: it carries real conditions there
    assert any(e.indices[0] == e.indices[1] for e in hor.blocks["P4"])
