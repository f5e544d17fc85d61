import numpy as np
import pytest

from algvar.fields import UnboundVariableError
from algvar.jets import EvalContext, fd_check
from algvar.exprlang import (
    Bin,
    Call,
    Neg,
    Num,
    ParseError,
    Pow,
    Var,
    differentiate,
    evaluate,
    free_vars,
    parse,
    substitute,
    to_source,
)


def ctx_of(names, point):
    return EvalContext(tuple(names), np.array(point, dtype=float))


def test_parse_product_of_variables():
    assert parse("y2*y3") == Bin("*", Var("y2"), Var("y3"))


def test_parse_negated_product():
    assert parse("-(y1*y3)") == Neg(Bin("*", Var("y1"), Var("y3")))


def test_parse_error_position():
    with pytest.raises(ParseError) as err:
        parse("1 + * 2")
    assert err.value.offset == 4
    assert "1 + * 2" in err.value.excerpt


def test_unknown_function_rejected():
    with pytest.raises(ParseError):
        parse("foo(x1)")
    with pytest.raises(ParseError):
        parse("sin + 2")  # function name without a call


def test_power_requires_literal_exponent():
    with pytest.raises(ParseError):
        parse("x1^y1")
    assert parse("x1^-2") == Pow(Var("x1"), -2.0)
    # right-associative literal towers collapse to a constant exponent
    assert parse("x1^2^3") == Pow(Var("x1"), 8.0)


def test_precedence():
    assert evaluate(parse("1 - 2 - 3"), ctx_of([], [])).value == -4.0
    assert evaluate(parse("2 + 3*4"), ctx_of([], [])).value == 14.0
    assert evaluate(parse("-2^2"), ctx_of([], [])).value == -4.0  # -(2^2)
    assert evaluate(parse("6/3/2"), ctx_of([], [])).value == 1.0


def test_eval_square():
    jet = evaluate(parse("x1^2"), ctx_of(["x1"], [3.0]))
    assert jet.value == 9.0
    assert jet.grad[0] == 6.0
    assert jet.hess[0, 0] == 2.0


def test_eval_sin_times_fiber():
    ctx = ctx_of(["x1", "y1"], [0.0, 5.0])
    jet = evaluate(parse("sin(x1)*y1"), ctx)
    assert jet.value == 0.0
    assert np.array_equal(jet.grad, [5.0, 0.0])
    assert np.array_equal(jet.hess, [[0.0, 1.0], [1.0, 0.0]])
    assert fd_check(parse("sin(x1)*y1"), ctx, 1e-5) < 1e-6


def test_unbound_variable_is_named():
    with pytest.raises(UnboundVariableError) as err:
        evaluate(parse("t"), ctx_of(["x1"], [0.0]))
    assert err.value.name == "t"


def test_free_vars():
    assert free_vars(parse("y2*y3")) == {"y2", "y3"}
    assert free_vars(parse("1.5")) == set()
    assert free_vars(parse("x1 + sin(x1)")) == {"x1"}


ROUND_TRIP = [
    "y2*y3",
    "-(y1*y3)",
    "x1^2.0/2.0 - 1.5",
    "sin(x1)*cos(x2) + exp(-(x1*x2))",
    "(x1 + x2)*(x1 - x2)",
    "1/(1 + x1^2)",
    "sqrt(x1 + 2.0) - log(x2 + 3.0)",
    "x1 - (x2 - x3)",
    "x1/(x2/x3)",
    "-(-x1 + x2)",
    "2.0*x1^-3.0",
]


@pytest.mark.parametrize("source", ROUND_TRIP)
def test_print_parse_round_trip(source):
    tree = parse(source)
    assert parse(to_source(tree)) == tree


def test_round_trip_random_trees():
    # random trees built through the folding constructors (the image of the
    # parser) must survive print -> parse structurally
    import numpy as np

    from algvar.exprlang import eadd, ecall, ediv, emul, eneg, epow, esub

    rng = np.random.default_rng(2718)
    names = ["x1", "x2", "y1", "y2"]

    def tree(depth):
        if depth == 0 or rng.random() < 0.25:
            if rng.random() < 0.4:
                return Num(float(np.round(rng.uniform(-3, 3), 3)))
            return Var(str(rng.choice(names)))
        pick = rng.integers(0, 7)
        if pick == 0:
            return eadd(tree(depth - 1), tree(depth - 1))
        if pick == 1:
            return esub(tree(depth - 1), tree(depth - 1))
        if pick == 2:
            return emul(tree(depth - 1), tree(depth - 1))
        if pick == 3:
            return ediv(tree(depth - 1), tree(depth - 1))
        if pick == 4:
            return eneg(tree(depth - 1))
        if pick == 5:
            return epow(tree(depth - 1), float(rng.integers(-3, 4)))
        return ecall(str(rng.choice(["sin", "cos", "exp"])), tree(depth - 1))

    for _ in range(200):
        t = tree(4)
        assert parse(to_source(t)) == t, to_source(t)


def test_eval_matches_hand_built_trees():
    cases = [
        ("y2*y3", Bin("*", Var("y2"), Var("y3"))),
        ("sin(x1) + 2", Bin("+", Call("sin", Var("x1")), Num(2.0))),
        ("-(x1/y2)", Neg(Bin("/", Var("x1"), Var("y2")))),
        ("x1^3", Pow(Var("x1"), 3.0)),
    ]
    ctx = ctx_of(["x1", "y2", "y3"], [0.7, 1.3, -0.4])
    for source, tree in cases:
        a = evaluate(parse(source), ctx)
        b = evaluate(tree, ctx)
        assert a.value == b.value
        assert np.array_equal(a.grad, b.grad)
        assert np.array_equal(a.hess, b.hess)


def test_constant_expressions_have_exact_zero_derivatives():
    ctx = ctx_of(["x1", "x2"], [0.3, 0.4])
    for source in ("1.5", "2 + 3*4", "sin(1.0)", "2^-2"):
        jet = evaluate(parse(source), ctx)
        assert not jet.grad.any()
        assert not jet.hess.any()


@pytest.mark.parametrize(
    "source,var",
    [
        ("x1^2*y1", "x1"),
        ("sin(x1*x2)", "x2"),
        ("exp(x1)/x2", "x1"),
        ("sqrt(x1 + 2)", "x1"),
        ("log(x1 + 3)*x1", "x1"),
        ("1/(1 + x1^2)", "x1"),
    ],
)
def test_symbolic_derivative_matches_fd(source, var):
    tree = parse(source)
    deriv = differentiate(tree, var)
    names = sorted(free_vars(tree) | {var})
    point = [0.6 + 0.1 * k for k in range(len(names))]
    ctx = ctx_of(names, point)
    idx = names.index(var)
    h = 1e-6
    shift = np.zeros(len(names))
    shift[idx] = h
    fd = (
        evaluate(tree, ctx.shifted(shift)).value
        - evaluate(tree, ctx.shifted(-shift)).value
    ) / (2 * h)
    assert evaluate(deriv, ctx).value == pytest.approx(fd, abs=1e-8)


def test_differentiate_example():
    assert to_source(differentiate(parse("x1^2*y1"), "x1")) == "2.0*x1*y1"


def test_substitute():
    tree = parse("x1^2 + y1")
    out = substitute(tree, {"x1": parse("2*t"), "y1": parse("t")})
    ctx = ctx_of(["t"], [0.5])
    assert evaluate(out, ctx).value == pytest.approx((2 * 0.5) ** 2 + 0.5)


def test_whitespace_insensitive():
    assert parse(" y2 * y3 ") == parse("y2*y3")
    assert parse("1.5e-3+x1") == parse("1.5e-3 + x1")


def test_integer_power_at_negative_base_stays_exact():
    # literal exponents avoid log-based rewrites, so negative bases work
    jet = evaluate(parse("x1^3"), ctx_of(["x1"], [-2.0]))
    assert jet.value == -8.0
    assert jet.grad[0] == 12.0
    assert jet.hess[0, 0] == -12.0
