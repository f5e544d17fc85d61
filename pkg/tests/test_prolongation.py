import numpy as np
import pytest

from algvar.algebroid import lie_algebra, tangent_bundle
from algvar.exprlang import Num, Var, parse
from algvar.prolongation import (
    ProlongSection,
    euler_section,
    horizontal_lift_basis,
    lift_map,
    prolong_structure,
    theta_composition,
    tulczyjew_map,
    vertical_endo,
    ProlongVector,
)
from algvar.sode import MultiplierMap, SodeSection, theta_components
from algvar.sampling import sample_points
from algvar.variational import Lagrangian, legendre

from conftest import se2_constants


def section_values(sec, E, point):
    env = E.full_env(point)
    return (
        np.array([f.jet(env).value for f in sec.t]),
        np.array([f.jet(env).value for f in sec.v]),
    )


def test_prolong_structure_tangent_all_zero():
    E = tangent_bundle(2)
    ps = prolong_structure(E)
    env = E.base_env([0.3, 0.4])
    for a in range(2):
        for b in range(2):
            for (_, coeff) in ps.bracket[(("T", a), ("T", b))]:
                assert coeff.jet(env).value == 0.0
            assert ps.bracket[(("V", a), ("V", b))] == []


def test_prolong_structure_se2_bracket(se2):
    ps = prolong_structure(se2)
    env = se2.base_env([])
    # [T_2, T_3] = T_1
    coeffs = {target: f.jet(env).value for target, f in ps.bracket[(("T", 1), ("T", 2))]}
    assert coeffs[("T", 0)] == 1.0
    assert coeffs[("T", 1)] == 0.0
    assert coeffs[("T", 2)] == 0.0


def test_prolong_anchor_actions(se2):
    ps = prolong_structure(se2)
    assert ps.anchor[("T", 0)] == []  # zero anchor: no base derivations
    ((var, coeff),) = ps.anchor[("V", 2)]
    assert var == "y3"
    env = se2.base_env([])
    assert coeff.jet(env).value == 1.0


def test_vertical_endo_basis_actions(se2):
    n = se2.n
    zero, one = Num(0.0), Num(1.0)
    for a in range(n):
        t_basis = ProlongSection(
            tuple(one if b == a else zero for b in range(n)), (zero,) * n
        )
        img = vertical_endo(t_basis, se2)
        tv, vv = section_values(img, se2, [0.2, -0.4, 0.9])
        assert not tv.any()
        assert vv[a] == 1.0 and np.count_nonzero(vv) == 1
        v_basis = ProlongSection((zero,) * n, tuple(one if b == a else zero for b in range(n)))
        img = vertical_endo(v_basis, se2)
        tv, vv = section_values(img, se2, [0.2, -0.4, 0.9])
        assert not tv.any() and not vv.any()


def test_vertical_endo_squares_to_zero(se2):
    sec = ProlongSection(
        (parse("y1*y2"), parse("y3"), Num(2.0)),
        (parse("y2"), Num(0.0), parse("y1^2")),
    )
    once = vertical_endo(sec, se2)
    twice = vertical_endo(once, se2)
    tv, vv = section_values(twice, se2, [0.5, 0.1, -0.3])
    assert not tv.any() and not vv.any()


def test_sode_section_characterization(se2, se2_forced):
    _, gamma, _ = se2_forced
    n = se2.n
    sode_sec = ProlongSection(tuple(Var(f"y{k+1}") for k in range(n)), gamma.components)
    img = vertical_endo(sode_sec, se2)
    delta = euler_section(se2)
    pt = [0.7, -0.2, 0.5]
    tv, vv = section_values(img, se2, pt)
    dt, dv = section_values(delta, se2, pt)
    assert np.allclose(tv, dt) and np.allclose(vv, dv)
    # a non-SODE section (T-components not the fiber coordinates) fails
    bad = ProlongSection((Var("y2"), Var("y1"), Num(0.0)), gamma.components)
    tv, vv = section_values(vertical_endo(bad, se2), se2, pt)
    assert not np.allclose(vv, dv)


def test_euler_section_components(se2):
    delta = euler_section(se2)
    tv, vv = section_values(delta, se2, [0.3, 0.6, -0.2])
    assert not tv.any()
    assert np.allclose(vv, [0.3, 0.6, -0.2])


def test_horizontal_lift_flat_zero_sode():
    E = lie_algebra(np.zeros((2, 2, 2)))
    gamma = SodeSection((Num(0.0), Num(0.0)))
    for a, H in enumerate(horizontal_lift_basis(E, gamma)):
        tv, vv = section_values(H, E, [0.4, 0.5])
        assert tv[a] == 1.0 and np.count_nonzero(tv) == 1
        assert not vv.any()


def test_horizontal_lift_linear_drag():
    E = tangent_bundle(2)
    gamma = SodeSection((parse("-2*y1"), parse("-2*y2")))
    basis = horizontal_lift_basis(E, gamma)
    for a, H in enumerate(basis):
        tv, vv = section_values(H, E, [0.1, 0.2, 0.8, -0.5])
        expected = np.zeros(2)
        expected[a] = -1.0
        assert np.allclose(vv, expected)


def test_horizontal_lift_se2_example(se2, se2_forced):
    # hand expansion: Lambda^1_3 = y2, Lambda^2_3 = -y1, all else 0
    _, gamma, _ = se2_forced
    basis = horizontal_lift_basis(se2, gamma)
    y = [0.7, -0.4, 0.9]
    lam = np.zeros((3, 3))
    for a, H in enumerate(basis):
        tv, vv = section_values(H, se2, y)
        assert tv[a] == 1.0 and np.count_nonzero(tv) == 1  # H - T is vertical
        lam[:, a] = vv
    expected = np.zeros((3, 3))
    expected[0, 2] = y[1]
    expected[1, 2] = -y[0]
    assert np.allclose(lam, expected)


def test_tulczyjew_zero_bracket_is_swap():
    E = tangent_bundle(2)
    x = np.array([0.3, 0.4])
    y_star = np.array([1.0, 2.0])
    z = np.array([3.0, 4.0])
    v = np.array([5.0, 6.0])
    out = tulczyjew_map(E, (x, y_star, z, v))
    assert np.array_equal(out[0], x)
    assert np.array_equal(out[1], z)
    assert np.array_equal(out[2], v)
    assert np.array_equal(out[3], y_star)


def test_tulczyjew_contraction_oracle(se2):
    rng = np.random.default_rng(5)
    env = se2.base_env([])
    cv = se2.C_values(env)
    for _ in range(5):
        y_star, z, v = rng.normal(size=3), rng.normal(size=3), rng.normal(size=3)
        out = tulczyjew_map(se2, (np.zeros(0), y_star, z, v))
        expected = np.zeros(3)
        for a in range(3):
            acc = v[a]
            for g in range(3):
                for b in range(3):
                    acc += cv[g, a, b] * y_star[g] * z[b]
            expected[a] = acc
        assert np.allclose(out[2], expected)


def test_tulczyjew_shape_check(se2):
    with pytest.raises(ValueError):
        tulczyjew_map(se2, (np.zeros(0), np.zeros(2), np.zeros(3), np.zeros(3)))


def test_lift_map_identity_multiplier(se2):
    F = MultiplierMap((parse("y1"), parse("y2"), parse("y3")))
    p = ProlongVector(
        np.zeros(0), np.array([0.3, -0.2, 0.5]),
        np.array([1.0, 0.0, 2.0]), np.array([0.1, 0.2, 0.3]),
    )
    out = lift_map(se2, F, p)
    assert np.allclose(out[1], p.y)
    assert np.allclose(out[2], p.z)
    assert np.allclose(out[3], p.v)


def test_lift_map_constant_linear_multiplier():
    E = tangent_bundle(2)
    F = MultiplierMap((parse("2*y1 + y2"), parse("y1 + 3*y2")))
    g = np.array([[2.0, 1.0], [1.0, 3.0]])
    p = ProlongVector(
        np.array([0.4, -0.1]), np.array([0.3, 0.9]),
        np.array([1.0, -1.0]), np.array([0.5, 0.25]),
    )
    out = lift_map(E, F, p)
    assert np.allclose(out[3], g @ p.v)


def test_lift_map_fd_oracle():
    # last block is the directional derivative of F along (rho z, v)
    E = tangent_bundle(2)
    L = Lagrangian(parse("(1 + x1^2)*(y1^2 + y2^2)/2 + x2*y1*y2"))
    F = legendre(E, L)
    p = ProlongVector(
        np.array([0.3, -0.5]), np.array([0.7, 0.2]),
        np.array([0.9, -0.4]), np.array([0.1, 0.6]),
    )
    out = lift_map(E, F, p)
    h = 1e-6

    def F_at(x, y):
        env = E.full_env(np.concatenate([x, y]))
        return np.array([f.jet(env).value for f in F.components])

    fd = (F_at(p.x + h * p.z, p.y + h * p.v) - F_at(p.x - h * p.z, p.y - h * p.v)) / (2 * h)
    assert np.allclose(out[3], fd, atol=1e-7)


def test_theta_composition_se2_forced(se2_forced):
    se2, gamma, F = se2_forced
    out = theta_composition(se2, gamma, F, [0.4, -0.8, 0.3])
    assert np.allclose(out.mu, [0.0, 0.0, 1.0], atol=1e-15)
    assert np.allclose(out.nu, [0.4, -0.8, 0.3])


def test_theta_composition_flat_zero():
    E = lie_algebra(np.zeros((2, 2, 2)))
    gamma = SodeSection((Num(0.0), Num(0.0)))
    F = MultiplierMap((parse("y1"), parse("y2")))
    out = theta_composition(E, gamma, F, [0.3, 0.4])
    assert not out.mu.any()


def test_theta_composition_matches_direct_formula():
    from algvar.algebroid import AtiyahData, atiyah_algebroid

    E1 = tangent_bundle(2)
    L = Lagrangian(parse("(1 + 0.3*x1^2)*y1^2/2 + y2^2/2 + x1*x2*y1*y2 + x2^3"))
    models = [
        (E1, SodeSection((parse("x2*y1*y2 - x1"), parse("y1^2 - x2"))), legendre(E1, L)),
    ]
    se2 = lie_algebra(se2_constants())
    models.append((
        se2,
        SodeSection((parse("y2*y3"), parse("-(y1*y3)"), parse("1"))),
        MultiplierMap((parse("y1 + 0.2*y2^2"), parse("y2"), parse("y3*y1"))),
    ))
    atiyah = atiyah_algebroid(
        AtiyahData(2, 1, ((parse("x2"), parse("0")),), np.zeros((1, 1, 1)))
    )
    models.append((
        atiyah,
        SodeSection((parse("-(y2*y3)"), parse("y1*y3"), parse("x1*y2"))),
        MultiplierMap((parse("y1"), parse("y2 + x1*y3"), parse("y3"))),
    ))
    for E, gamma, F in models:
        for pt in sample_points(E.m, E.n, 100, -1, 1, seed=12):
            comp = theta_composition(E, gamma, F, pt)
            direct = theta_components(E, gamma, F, pt)
            assert np.max(np.abs(comp.mu - direct.theta)) < 1e-12
            assert np.max(np.abs(comp.nu - direct.F)) < 1e-12
