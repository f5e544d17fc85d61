import numpy as np
import pytest

from algvar.algebroid import AtiyahData, atiyah_algebroid, lie_algebra, tangent_bundle
from algvar.exprlang import Num, Var, eadd, emul, parse
from algvar.sode import MultiplierMap, SodeSection
from algvar.variational import Lagrangian


def se2_constants():
    c = np.zeros((3, 3, 3))
    c[0, 1, 2] = 1.0   # [e2, e3] = e1
    c[0, 2, 1] = -1.0
    c[1, 0, 2] = -1.0  # [e1, e3] = -e2
    c[1, 2, 0] = 1.0
    return c


@pytest.fixture
def se2():
    return lie_algebra(se2_constants())


@pytest.fixture
def se2_forced(se2):
    gamma = SodeSection((parse("y2*y3"), parse("-(y1*y3)"), parse("1")))
    F = MultiplierMap((parse("y1"), parse("y2"), parse("y3")))
    return se2, gamma, F


# structure-constant library: every table satisfies Jacobi
CONSTANT_TABLES = {
    1: [np.zeros((1, 1, 1))],
    2: [np.zeros((2, 2, 2)), None],  # filled below: aff(1)
    3: [np.zeros((3, 3, 3)), None, None, None],  # se2, heisenberg, so3
}


def _aff1():
    c = np.zeros((2, 2, 2))
    c[1, 0, 1] = 1.0  # [e1, e2] = e2
    c[1, 1, 0] = -1.0
    return c


def _heisenberg():
    c = np.zeros((3, 3, 3))
    c[2, 0, 1] = 1.0  # [e1, e2] = e3
    c[2, 1, 0] = -1.0
    return c


def _so3():
    c = np.zeros((3, 3, 3))
    for a, b, g, s in ((0, 1, 2, 1), (1, 2, 0, 1), (2, 0, 1, 1)):
        c[g, a, b] = s
        c[g, b, a] = -s
    return c


CONSTANT_TABLES[2][1] = _aff1()
CONSTANT_TABLES[3][1] = se2_constants()
CONSTANT_TABLES[3][2] = _heisenberg()
CONSTANT_TABLES[3][3] = _so3()


def random_polynomial(rng, names, degree, scale=0.5):
    """A random polynomial expression of bounded degree in the given
    variables, built through the folding constructors."""
    expr = Num(float(rng.uniform(-scale, scale)))
    for _ in range(degree):
        term = Num(float(rng.uniform(-scale, scale)))
        for _ in range(rng.integers(1, degree + 1)):
            term = emul(term, Var(str(rng.choice(names))))
        expr = eadd(expr, term)
    return expr


def random_atiyah(rng) -> AtiyahData:
    m = int(rng.integers(1, 4))
    ng = int(rng.integers(1, 4))
    tables = [t for t in CONSTANT_TABLES[ng] if t is not None]
    c = tables[rng.integers(0, len(tables))] * float(rng.uniform(0.5, 1.5))
    names = [f"x{i + 1}" for i in range(m)]
    A = tuple(
        tuple(random_polynomial(rng, names, 2) for _ in range(m)) for _ in range(ng)
    )
    return AtiyahData(m, ng, A, c)


def builder_algebroids():
    out = [tangent_bundle(2), tangent_bundle(3), lie_algebra(se2_constants())]
    rng = np.random.default_rng(20240)
    out.append(atiyah_algebroid(random_atiyah(rng)))
    return out


def random_regular_lagrangian(rng, E, x_dependent_metric=False) -> Lagrangian:
    """Positive-definite quadratic in the fiber plus a degree-<=3 potential."""
    n, m = E.n, E.m
    a = rng.uniform(-1.0, 1.0, size=(n, n))
    M = a @ a.T + n * np.eye(n)
    expr = Num(0.0)
    for i in range(n):
        for j in range(n):
            coeff = Num(0.5 * M[i, j])
            term = emul(coeff, emul(Var(f"y{i + 1}"), Var(f"y{j + 1}")))
            if x_dependent_metric and m and i == j:
                from algvar.exprlang import ecall

                term = emul(term, eadd(Num(1.0), emul(Num(0.2), ecall("sin", Var("x1")))))
            expr = eadd(expr, term)
    if m:
        expr = eadd(expr, random_polynomial(rng, [f"x{i + 1}" for i in range(m)], 3))
    return Lagrangian(expr)
