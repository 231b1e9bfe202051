import math

import numpy as np
import pytest

from conftest import PROBLEMS

from sipsos.extraction import (
    ExtractionError,
    certificate_extract,
    certificate_query,
    extract_atoms,
    factor_gram,
    feasibility_gap,
    flatness_check,
    numerical_rank,
    verify_atoms_in_K,
)
from sipsos.measures import MeasureSpec, moment
from sipsos.momat import TruncatedSequence
from sipsos.polyring import Polynomial, basis, omega_r, parse_polynomial
from sipsos.problemfile import load_problem_file
from sipsos.regions import Box
from sipsos.relaxation import QuantifierPiece, SipProblem


def test_numerical_rank():
    assert numerical_rank(np.diag([1.0, 1e-3, 1e-9])) == 2
    assert numerical_rank(np.diag([1.0, 1e-3, 1e-9]), tol=1e-2) == 1
    assert numerical_rank(np.zeros((3, 3))) == 0


def match_atoms(found, truth):
    """Max coordinate error under the best assignment (greedy, atoms are well separated)."""
    err, used = 0.0, set()
    for u in truth:
        d = [np.abs(v - u).max() if i not in used else np.inf for i, v in enumerate(found)]
        i = int(np.argmin(d))
        used.add(i)
        err = max(err, d[i])
    return err


@pytest.mark.parametrize("n,r", [(1, 2), (2, 3), (3, 2)])
def test_atom_round_trip(rng, n, r):
    pts = rng.uniform(-1, 1, (r, n))
    lam = rng.uniform(0.2, 1.0, r)
    w = TruncatedSequence.from_atoms(pts, lam, 6)
    v = flatness_check(w, 1)
    assert v.flat and v.rank == r
    mu = extract_atoms(w, r)
    assert match_atoms(mu.atoms, pts) < 1e-8
    assert np.allclose(np.sort(mu.weights), np.sort(lam), atol=1e-8)
    assert np.allclose(mu.moments(6).values, w.values, atol=1e-8)


def test_extraction_is_seed_independent(rng):
    pts = rng.uniform(-1, 1, (3, 2))
    w = TruncatedSequence.from_atoms(pts, np.ones(3), 6)
    a = extract_atoms(w, 3, seed=1).atoms
    b = extract_atoms(w, 3, seed=99).atoms
    assert match_atoms(a, b) < 1e-8


def test_non_flat_sequence_is_detected():
    # uniform measure on [0, 1]: Hankel matrices have full rank
    w = TruncatedSequence(1, 6, [1 / (j + 1) for j in range(7)])
    v = flatness_check(w, 1)
    assert not v.flat and v.ranks == (1, 2, 3, 4)


def test_extraction_rejects_bad_rank(rng):
    w = TruncatedSequence.from_atoms(rng.uniform(-1, 1, (2, 2)), np.ones(2), 4)
    with pytest.raises(ExtractionError):
        extract_atoms(w, 0)
    with pytest.raises(ExtractionError):
        extract_atoms(w, 50)


def box_problem(constraint="1 - x1*y1 - x2*y2"):
    return SipProblem(2, 2, parse_polynomial("x1", 2, 2), [parse_polynomial(constraint, 2, 2)],
                      [QuantifierPiece(MeasureSpec.box([(0, 1), (0, 1)]), Box([(0, 1), (0, 1)]))])


@pytest.mark.parametrize("x", [(0.2, 0.3), (1.5, -0.5), (-1.0, -1.0), (0.7, 0.6)])
def test_feasibility_gap_closed_form(x):
    deltas, d = feasibility_gap(np.array(x), box_problem())
    expect = 1 - max(0.0, x[0]) - max(0.0, x[1])
    assert d == pytest.approx(expect, abs=1e-9)
    assert deltas == [d]


def test_feasibility_gap_interior_minimum():
    # min over [0,1]^2 of (y1 - 0.3)^2 + (y2 - 0.6)^2 - x1 is -x1, attained inside
    prob = box_problem("y1^2 - 0.6*y1 + 0.09 + y2^2 - 1.2*y2 + 0.36 - x1")
    _, d = feasibility_gap(np.array([0.25, 0.0]), prob)
    assert d == pytest.approx(-0.25, abs=1e-8)


def test_feasibility_gap_without_quantified_constraints():
    prob = box_problem()
    prob.constraints = []
    assert feasibility_gap(np.zeros(2), prob) == ([], math.inf)


def test_verify_atoms_shape_and_values():
    m = verify_atoms_in_K(np.array([[0.2, 0.3], [1.0, 1.0]]), box_problem().constraints,
                          box_problem())
    assert m.shape == (2, 1)
    assert np.allclose(m[:, 0], [0.5, -1.0], atol=1e-9)


def reconstruct(problem, inst, cert):
    """``sum_j int g_j (v^T G_j v) dnu`` (plus inequality terms) as an x-polynomial."""
    n, m = problem.n, problem.m
    out = {}
    for info, G in zip(inst.info, cert.grams):
        kp, lp = info.k_prime, info.l_prime
        if info.kind == "quantified":
            g = inst.generators[info.index]
            spec = problem.pieces[info.piece].measure
            idx = [(b, a) for b in basis(m, lp).tuples for a in basis(n, kp).tuples]
        else:
            g = problem.inequalities[info.index]
            spec = None
            idx = [((0,) * m, a) for a in basis(n, kp).tuples]
        for i, (b1, a1) in enumerate(idx):
            for j, (b2, a2) in enumerate(idx):
                if G[i, j] == 0.0:
                    continue
                for (ax, ay), c in g.items():
                    ey = tuple(u + v + z for u, v, z in zip(b1, b2, ay))
                    mass = moment(spec, ey) if spec is not None else 1.0
                    ex = tuple(u + v + z for u, v, z in zip(a1, a2, ax))
                    out[ex] = out.get(ex, 0.0) + G[i, j] * c * mass
    return Polynomial(n, 0, {(e, ()): v for e, v in out.items()})


def _x_only(p, n):
    return Polynomial(n, 0, {(ax, ()): c for (ax, _), c in p.items()})


def test_certificate_identity_rebuilt_independently():
    prob = load_problem_file(PROBLEMS / "integer_ellipses.sip").build()
    f = parse_polynomial("4 - x1^2 - x2^2", 2, 1)
    inst, sol = certificate_query(prob, f, 1, 3)
    cert = certificate_extract(inst, sol)
    assert cert.member and cert.lam > 0
    rebuilt = reconstruct(prob, inst, cert)
    diff = rebuilt - _x_only(f, 2)
    assert max((abs(c) for _, c in diff.items()), default=0.0) <= 1e-8
    for G in cert.grams:
        F, clipped = factor_gram(G)
        assert np.allclose(F.T @ F, G, atol=1e-8) and clipped <= 1e-8


def test_negative_constant_is_never_certified():
    prob = load_problem_file(PROBLEMS / "integer_ellipses.sip").build()
    for k in (1, 2):
        cert = certificate_extract(*certificate_query(prob, parse_polynomial("-1", 2, 1), k, 3))
        assert not cert.member
        assert cert.lam == pytest.approx(-1.0, abs=1e-6)


def test_perturbation_turns_borderline_query_into_certificate():
    prob = load_problem_file(PROBLEMS / "borderline.sip").build()
    f = parse_polynomial("1 - x1^2", 1, 1)
    plain = certificate_extract(*certificate_query(prob, f, 3, 3))
    assert not plain.member and plain.lam < 0
    g = f + 0.1 * omega_r(1, 2, 1)
    inst, sol = certificate_query(prob, g, 3, 3)
    pert = certificate_extract(inst, sol)
    assert pert.member and pert.residual <= 1e-8
    rebuilt = reconstruct(prob, inst, pert)
    assert (rebuilt - _x_only(g, 1)).almost_equal(Polynomial(1, 0), 1e-8)


def test_certificate_with_inequality_block():
    prob = box_problem("1 - x1*y1 - x2*y2")
    prob.inequalities = [parse_polynomial("1 - x1^2", 2, 2)]
    f = parse_polynomial("3 - x1 - x2", 2, 2)
    inst, sol = certificate_query(prob, f, 1, 1)
    cert = certificate_extract(inst, sol)
    assert cert.member
    assert "ineq0" in cert.labels
    diff = reconstruct(prob, inst, cert) - _x_only(f, 2)
    assert max((abs(c) for _, c in diff.items()), default=0.0) <= 1e-8
