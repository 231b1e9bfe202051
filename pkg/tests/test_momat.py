import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import (
    brute_localizing,
    brute_moment_matrix,
    brute_quantified,
    kron_instance,
    random_measure,
    random_polynomial,
)
from sipsos.measures import MeasureSpec
from sipsos.momat import (
    OrderTooSmallError,
    TruncatedSequence,
    degree_offsets,
    kron_coefficients,
    localizing_coefficients,
    localizing_matrix,
    localizing_vector,
    moment_matrix,
    quantified_localizing_coefficients,
    quantified_localizing_matrix,
    y_matrix,
)
from sipsos.polyring import basis, monomial_vector, n_monomials, parse_polynomial


def random_w(rng, n, degree):
    return TruncatedSequence(n, degree, rng.normal(size=n_monomials(n, degree)))


@pytest.mark.parametrize("n,k", [(1, 0), (1, 3), (2, 2), (3, 2)])
def test_moment_matrix_is_hankel(rng, n, k):
    w = random_w(rng, n, 2 * k)
    assert np.array_equal(moment_matrix(w, k), brute_moment_matrix(w, k))


def test_moment_matrix_of_one_variable_is_classical_hankel():
    w = TruncatedSequence(1, 4, [1, 2, 3, 4, 5])
    assert moment_matrix(w, 2).tolist() == [[1, 2, 3], [2, 3, 4], [3, 4, 5]]


def test_localizing_matrix_brute_force(rng):
    for _ in range(20):
        n = int(rng.integers(1, 4))
        c = random_polynomial(rng, n, 0, 3, 0)
        k = 2
        w = random_w(rng, n, 2 * k + 2)
        kp = k - -(-c.deg_x // 2)
        assert np.allclose(localizing_matrix(w, c, k), brute_localizing(w, c, kp), atol=1e-12)


def test_localizing_vector_entries(rng):
    w = random_w(rng, 2, 4)
    c = parse_polynomial("1 - x1^2 + 3*x1*x2", 2)
    v = localizing_vector(w, c, 4)
    for i, a in enumerate(basis(2, 2).tuples):
        expect = w[a] - w[(a[0] + 2, a[1])] + 3 * w[(a[0] + 1, a[1] + 1)]
        assert v[i] == pytest.approx(expect)


def test_riesz_functional(rng):
    w = random_w(rng, 2, 3)
    p = parse_polynomial("2 - x1 + 4*x1*x2^2", 2)
    assert w.riesz(p) == pytest.approx(2 * w[(0, 0)] - w[(1, 0)] + 4 * w[(1, 2)])


def test_from_atoms_and_from_moment_matrix_round_trip(rng):
    pts, lam = rng.uniform(-1, 1, (3, 2)), rng.uniform(0.1, 1, 3)
    w = TruncatedSequence.from_atoms(pts, lam, 4)
    assert np.allclose(w.values, lam @ monomial_vector(pts, 4))
    back = TruncatedSequence.from_moment_matrix(moment_matrix(w, 2), 2)
    assert np.allclose(back.values, w.values)
    assert np.allclose(w.first_moments(), lam @ pts)
    assert np.array_equal(w.truncate(2).values, w.values[:6])


def test_y_matrix_brute_force():
    spec = MeasureSpec.simplex(2)
    h = parse_polynomial("1 - y1^2 + 2*y1*y2", 0, 2)
    Y = y_matrix(spec, h, 1)
    from sipsos.measures import moment
    b = basis(2, 1).tuples
    for i, a in enumerate(b):
        for j, c in enumerate(b):
            s = (a[0] + c[0], a[1] + c[1])
            expect = (moment(spec, s) - moment(spec, (s[0] + 2, s[1]))
                      + 2 * moment(spec, (s[0] + 1, s[1] + 1)))
            assert Y[i, j] == pytest.approx(expect)


def test_y_matrix_sample_route_matches_table_route(rng):
    pts = rng.uniform(-1, 1, (40, 2))
    h = parse_polynomial("0.5 + y1*y2^2", 0, 2)
    direct = y_matrix(MeasureSpec.samples(pts), h, 2)
    tabled = y_matrix(MeasureSpec.discrete(pts), h, 2)
    assert np.allclose(direct, tabled, atol=1e-13)


def test_quantified_localizer_matches_brute_force(rng):
    for _ in range(25):
        w, g, spec, k, l = kron_instance(rng)
        q = quantified_localizing_matrix(w, g, spec, k, l)
        assert np.abs(q.assembled - brute_quantified(w, g, spec, k, l)).max() <= 1e-10


def test_coefficient_map_matches_numeric_assembly(rng):
    for _ in range(25):
        w, g, spec, k, l = kron_instance(rng)
        coef, side, kp, lp, _ = quantified_localizing_coefficients(g, spec, k, l, w.n, w.degree)
        q = quantified_localizing_matrix(w, g, spec, k, l)
        M = (coef @ w.values).reshape(side, side)
        assert (kp, lp) == (q.k_prime, q.l_prime)
        assert np.abs(0.5 * (M + M.T) - q.assembled).max() <= 1e-10


def test_kron_coefficients_equal_numpy_kron(rng):
    Y = rng.normal(size=(3, 3))
    Y[0, 2] = Y[2, 0] = 0.0
    c = parse_polynomial("1 + x1 - x2^2", 2)
    L = localizing_coefficients(c, 1, 2, 4)
    w = rng.normal(size=n_monomials(2, 4))
    got = (kron_coefficients(Y, L, 3) @ w).reshape(9, 9)
    assert np.allclose(got, np.kron(Y, (L @ w).reshape(3, 3)))


def test_atomic_w_gives_sum_of_rank_structured_terms(rng):
    # for w = sum lam_i [u_i], the localizer is sum lam_i Y_{g(u_i, .)} (x) [u_i][u_i]^T
    pts, lam = rng.uniform(-1, 1, (3, 2)), rng.uniform(0.2, 1, 3)
    w = TruncatedSequence.from_atoms(pts, lam, 4)
    g = parse_polynomial("1 - x1*y1 - x2*y1^2", 2, 1)
    spec = MeasureSpec.box([(0.0, 1.0)])
    q = quantified_localizing_matrix(w, g, spec, 2, 2)
    expect = 0
    for u, a in zip(pts, lam):
        v = monomial_vector(u[None], q.k_prime)[0]
        expect = expect + a * np.kron(y_matrix(spec, g.substitute_x(u), q.l_prime),
                                      np.outer(v, v))
    assert np.allclose(q.assembled, expect, atol=1e-12)


@given(st.integers(0, 3), st.integers(0, 3), st.integers(0, 4), st.integers(0, 4))
def test_degree_offsets(k, l, dx, dy):
    g = random_polynomial(np.random.default_rng(dx * 10 + dy), 1, 1, 0, 0, 1)
    g = g + parse_polynomial(f"x1^{dx}*y1^{dy}", 1, 1)
    kp, lp = degree_offsets(g, k, l)
    assert kp == k - (dx + 1) // 2 and lp == l - (dy + 1) // 2


def test_order_too_small_is_reported(rng):
    w = random_w(rng, 1, 2)
    g = parse_polynomial("1 - x1^4*y1", 1, 1)
    with pytest.raises(OrderTooSmallError):
        quantified_localizing_matrix(w, g, MeasureSpec.box([(0, 1)]), 1, 1)
    with pytest.raises(OrderTooSmallError):
        moment_matrix(w, 2)


def test_psd_for_true_measures_and_nonnegative_g(rng):
    # g >= 0 on supp(nu) x atoms gives a PSD quantified localizer
    pts = rng.uniform(-0.5, 0.5, (4, 2))
    w = TruncatedSequence.from_atoms(pts, np.ones(4), 4)
    g = parse_polynomial("2 - x1*y1 - x2*y2", 2, 2)
    for seed in range(5):
        spec = random_measure(np.random.default_rng(seed), 2)
        q = quantified_localizing_matrix(w, g, spec, 2, 2)
        assert np.linalg.eigvalsh(q.assembled).min() >= -1e-10
