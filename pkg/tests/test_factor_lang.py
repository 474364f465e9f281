import numpy as np
import pytest

from factor_lang import (
    BinOp,
    Call,
    Neg,
    Num,
    Pow,
    Var,
    build_factor_set_1d,
    build_factor_set_2d,
    constant_factors_2d,
    estimate_lipschitz,
    estimate_sup,
    make_factor,
    parse_expr,
    to_text,
    tokenize,
    zero_factors_1d,
)
from models import BoundsMode, ExprEvalError, ExprSyntaxError, MapSystemError


def _random_tree(rng, depth):
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.5:
            return Num([0.5, 2.0, 3.25, 10.0, 1e-05][int(rng.integers(0, 5))])
        return Var(["x", "y"][int(rng.integers(0, 2))])
    kind = int(rng.integers(0, 4))
    if kind == 0:
        return Neg(_random_tree(rng, depth - 1))
    if kind == 1:
        return BinOp("+-*/"[int(rng.integers(0, 4))], _random_tree(rng, depth - 1), _random_tree(rng, depth - 1))
    if kind == 2:
        return Pow(_random_tree(rng, depth - 1), int(rng.integers(0, 4)))
    return Call(["sin", "cos", "abs"][int(rng.integers(0, 3))], _random_tree(rng, depth - 1))


class TestParse:
    def test_config_three_formula(self):
        e = parse_expr("0.99-abs(sin(10*x))")
        assert e.root == BinOp("-", Num(0.99), Call("abs", Call("sin", BinOp("*", Num(10.0), Var("x")))))

    def test_precedence_and_power(self):
        e = parse_expr("1+2*x^3", dim=1)
        assert e.root == BinOp("+", Num(1.0), BinOp("*", Num(2.0), Pow(Var("x"), 3)))

    def test_implicit_multiplication_rejected(self):
        with pytest.raises(ExprSyntaxError, match="implicit multiplication") as exc:
            parse_expr("2.9x")
        assert exc.value.position == 3

    def test_unknown_identifier(self):
        with pytest.raises(ExprSyntaxError, match="unknown identifier 'z'"):
            parse_expr("cos(z)", dim=1)

    def test_y_needs_two_variables(self):
        with pytest.raises(ExprSyntaxError, match="not available in 1D"):
            parse_expr("x+y", dim=1)
        assert parse_expr("x+y", dim=2).dim == 2

    def test_exponent_must_be_integer(self):
        with pytest.raises(ExprSyntaxError, match="exponent"):
            parse_expr("x^0.5")

    def test_unbalanced_parenthesis(self):
        with pytest.raises(ExprSyntaxError, match="end of expression"):
            parse_expr("sin(x")

    def test_bad_character(self):
        with pytest.raises(ExprSyntaxError, match="unexpected character"):
            tokenize("x$2")

    def test_printed_text_parses_back(self):
        for text in ["0.99-abs(sin(10*x))", "-x^2+3/(1+x)", "0.45*(cos(x)-sin(y))", "x-(1-x)"]:
            e = parse_expr(text, dim=2)
            assert parse_expr(str(e), dim=2) == e

    def test_random_trees_parse_back(self):
        rng = np.random.default_rng(17)
        for _ in range(300):
            tree = _random_tree(rng, 5)
            assert parse_expr(to_text(tree), dim=2).root == tree

    def test_left_associative_chains(self):
        assert parse_expr("x/2/y", dim=2).root == BinOp("/", BinOp("/", Var("x"), Num(2.0)), Var("y"))
        tree = BinOp("/", Var("x"), BinOp("/", Num(2.0), Var("y")))
        assert to_text(tree) == "x/(2.0/y)"
        assert parse_expr("-x^2").root == Neg(Pow(Var("x"), 2))


class TestEvaluate:
    def test_scalar_points(self):
        assert parse_expr("0.99-abs(sin(10*x))")(0.0) == pytest.approx(0.99)
        assert parse_expr("2.9*x")(0.25) == pytest.approx(0.725)
        assert parse_expr("0.45*(cos(x)+sin(y))", dim=2)(0.0, 0.0) == pytest.approx(0.45)

    def test_array_broadcast(self):
        values = parse_expr("0.3")(np.linspace(0, 1, 7))
        assert values.shape == (7,)
        np.testing.assert_allclose(values, 0.3)

    def test_division_by_zero(self):
        with pytest.raises(ExprEvalError):
            parse_expr("1/x")(0.0)

    def test_sqrt_of_negative(self):
        with pytest.raises(ExprEvalError):
            parse_expr("sqrt(x-1)")(0.0)


class TestBounds:
    def test_constant_sup(self):
        assert estimate_sup(parse_expr("0.3"), (0.0, 0.25)) == pytest.approx(0.315)

    def test_linear_sup(self):
        assert estimate_sup(parse_expr("x"), (0.0, 0.5)) == pytest.approx(0.525)

    def test_sine_sup(self):
        assert estimate_sup(parse_expr("sin(10*x)"), (0.0, 0.25)) == pytest.approx(1.05, abs=1e-6)

    def test_constant_lipschitz(self):
        assert estimate_lipschitz(parse_expr("0.3"), (0.0, 0.25)) == 0.0

    def test_linear_lipschitz(self):
        assert estimate_lipschitz(parse_expr("x"), (0.2, 0.7)) == pytest.approx(1.05)

    def test_sine_lipschitz(self):
        assert estimate_lipschitz(parse_expr("sin(10*x)"), (0.0, 0.25)) == pytest.approx(10.5, rel=1e-3)

    def test_bivariate_sup_below_one(self):
        fn = make_factor("0.45*(cos(x)+sin(y))", 2, (0.0, 0.25, 0.0, 0.25))
        assert fn.sup_est < 1.0


class TestFactors:
    def test_supplied_bounds(self):
        fn = make_factor({"expr": "sin(x)", "sup": 0.5, "lipschitz": 1.0}, 1, (0.0, 1.0))
        assert fn.bounds_mode == BoundsMode.USER_SUPPLIED
        assert fn.sup_est == fn.sup_sampled == 0.5
        assert fn.lip_est == 1.0

    def test_partial_override_stays_estimated(self):
        fn = make_factor({"expr": "x", "sup": 0.9}, 1, (0.0, 1.0))
        assert fn.bounds_mode == BoundsMode.ESTIMATED
        assert fn.lip_est == pytest.approx(1.05)

    def test_negative_bound_rejected(self):
        with pytest.raises(ValueError, match="sup bound"):
            make_factor({"expr": "x", "sup": -1.0}, 1, (0.0, 1.0))

    def test_zero_set(self):
        fs = build_factor_set_1d([0, 0.25, 0.5, 0.75, 1], zero_factors_1d(4))
        assert len(fs) == 4
        assert fs.offending() == []
        assert fs[2].column_sums() == (0.0, 0.0)

    def test_offending_factor_reported(self):
        factors = zero_factors_1d(2)
        factors["s"] = ["0.99", "0.2"]
        fs = build_factor_set_1d([0, 0.5, 1], factors)
        assert [(r, name) for r, name, _ in fs.offending()] == [(0, "s")]
        assert fs[0].column_sums() == pytest.approx((0.99, 0.0))
        assert fs[0].column_sums(padded=True)[0] == pytest.approx(0.99 * 1.05)

    def test_list_length_mismatch(self):
        factors = zero_factors_1d(4)
        factors["s"] = [0.0] * 3
        with pytest.raises(MapSystemError, match="'s'"):
            build_factor_set_1d([0, 0.25, 0.5, 0.75, 1], factors)

    def test_matrix_layout(self):
        factors = {"s": [1.0, 1.0], "s_prime": [2.0, 2.0], "s_tilde": [3.0, 3.0], "s_tilde_prime": [4.0, 4.0]}
        fs = build_factor_set_1d([0, 0.5, 1], factors)
        mat = fs[0].matrix(np.array([0.1, 0.2]))
        assert mat.shape == (2, 2, 2)
        np.testing.assert_allclose(mat[0], [[1.0, 2.0], [3.0, 4.0]])

    def test_bivariate_tables_are_indexed_by_x_region(self):
        factors = constant_factors_2d(3, 2, {"s": 0.1})
        factors["s"][2][1] = 0.5
        fs = build_factor_set_2d([0, 1, 2, 3], [0, 1, 2], factors, samples=5)
        assert len(fs) == 6
        assert fs[2 + 1 * 3].s.sup_sampled == pytest.approx(0.5)
        assert fs[1].s.sup_sampled == pytest.approx(0.1)
