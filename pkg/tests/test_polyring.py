import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import polynomials
from sipsos.polyring import (
    Polynomial,
    PolynomialSyntaxError,
    basis,
    mono_index,
    monomial_vector,
    n_monomials,
    omega_r,
    parse_polynomial,
    separable_decomposition,
)


def test_graded_lex_order_two_variables():
    assert basis(2, 2).tuples == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


def test_graded_lex_order_three_variables_degree_one():
    assert basis(3, 1).tuples == ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1))


@pytest.mark.parametrize("n,d", [(1, 0), (1, 5), (2, 4), (3, 3), (4, 2), (0, 3)])
def test_basis_size_is_binomial(n, d):
    assert len(basis(n, d)) == n_monomials(n, d) == math.comb(n + d, d)


@given(st.integers(1, 4), st.integers(0, 5))
def test_mono_index_matches_table_position(n, d):
    b = basis(n, d)
    for i, e in enumerate(b.tuples):
        assert mono_index(e, n) == i
    assert np.array_equal(b.index(b.exponents), np.arange(len(b)))


def test_mono_index_independent_of_truncation():
    # the prefix of a larger basis is the smaller basis
    assert basis(3, 4).tuples[: len(basis(3, 2))] == basis(3, 2).tuples


def test_monomial_vector_brute_force(rng):
    pts = rng.normal(size=(7, 3))
    V = monomial_vector(pts, 3)
    for j, e in enumerate(basis(3, 3).tuples):
        assert np.allclose(V[:, j], np.prod(pts ** np.array(e), axis=1))


@given(polynomials(2, 1), polynomials(2, 1))
def test_product_and_sum_evaluate_pointwise(p, q):
    rng = np.random.default_rng(0)
    X, Y = rng.uniform(-1, 1, (5, 2)), rng.uniform(-1, 1, (5, 1))
    pv, qv = p.eval_batch(X, Y), q.eval_batch(X, Y)
    assert np.allclose((p * q).eval_batch(X, Y), pv * qv, atol=1e-9)
    assert np.allclose((p + q).eval_batch(X, Y), pv + qv, atol=1e-12)
    assert np.allclose((p - q).eval_batch(X, Y), pv - qv, atol=1e-12)
    assert np.allclose((p ** 2).eval_batch(X, Y), pv ** 2, atol=1e-9)


@given(polynomials(2, 2))
def test_text_round_trip(p):
    assert parse_polynomial(str(p), 2, 2).almost_equal(p, 1e-12)


@given(polynomials(2, 2))
def test_separable_decomposition_reassembles(p):
    parts = separable_decomposition(p)
    total = Polynomial(2, 2)
    for gi, hi in parts:
        assert gi.is_x_only() and hi.is_y_only()
        total = total + gi * hi
    assert total.almost_equal(p, 1e-12)
    assert len({tuple(sorted(h.terms)) for _, h in parts}) == len(parts)


@given(polynomials(2, 2), st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_substitute_x_agrees_with_evaluation(p, x):
    y = np.array([[0.3, -0.7]])
    lhs = p.substitute_x(x).eval_batch(None, y)
    rhs = p.eval_batch(np.array([x]), y)
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_x_coefficients_align_with_basis():
    p = parse_polynomial("3 - 2*x1 + x1*x2 + 5*x2^2", 2)
    assert np.allclose(p.x_coefficients(), [3, -2, 0, 0, 1, 5])
    assert np.allclose(p.x_coefficients(3)[:6], [3, -2, 0, 0, 1, 5])
    with pytest.raises(ValueError):
        parse_polynomial("x1*y1", 1, 1).x_coefficients()


def test_parse_accepts_spec_syntax():
    p = parse_polynomial("3.5*x1^2*y2 - x2 + 1", 2, 2)
    assert p.coefficient((2, 0), (0, 1)) == 3.5
    assert p.coefficient((0, 1)) == -1.0
    assert p.coefficient((0, 0)) == 1.0
    q = parse_polynomial(" 3.5 * x1 ** 2 * y2-x2+1 ", 2, 2)
    assert p == q


def test_parse_parentheses_division_and_bare_names():
    p = parse_polynomial("(x + y)^2 / 2", 1, 1)
    assert p == Polynomial(1, 1, {((2,), (0,)): 0.5, ((1,), (1,)): 1.0, ((0,), (2,)): 0.5})


@pytest.mark.parametrize("text,col", [("x1 + * 2", 6), ("x3", 1), ("x1 ^ y1", 6),
                                      ("2 $ x1", 3), ("(x1 + 1", 8)])
def test_parse_errors_report_column(text, col):
    with pytest.raises(PolynomialSyntaxError) as exc:
        parse_polynomial(text, 2, 1)
    assert exc.value.column == col


def test_omega_r_is_truncated_exponential_series():
    x = np.array([[0.4, -1.3]])
    for r in range(4):
        expect = sum(sum(v ** (2 * k) / math.factorial(k) for k in range(r + 1)) for v in x[0])
        assert np.isclose(omega_r(2, r).eval_batch(x), expect)
    assert omega_r(2, 2).deg_x == 4


def test_degrees():
    p = parse_polynomial("x1^3*y1 + y1^4 + x2", 2, 1)
    assert (p.deg_x, p.deg_y, p.degree) == (3, 4, 4)


def test_with_arity_preserves_values():
    p = parse_polynomial("x1^2 - 3*x1", 1)
    q = p.with_arity(2, 1)
    X = np.array([[0.5, 9.0]])
    assert np.isclose(q.eval_batch(X, np.zeros((1, 1))), p.eval_batch(X[:, :1]))


def test_exhaustive_small_product_coefficients():
    # (1 + x)^3 binomial coefficients
    p = parse_polynomial("1 + x1", 1) ** 3
    assert [p.coefficient((i,)) for i in range(4)] == [1, 3, 3, 1]
    for i, j in itertools.product(range(3), repeat=2):
        q = Polynomial.x(1, 2) ** i * Polynomial.x(2, 2) ** j
        assert q.coefficient((i, j)) == 1.0
