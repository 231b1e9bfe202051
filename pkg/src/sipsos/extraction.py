"""Post-processing of solved relaxations.

* :func:`flatness_check` -- rank stabilisation of moment matrices.
* :func:`extract_atoms` -- recover an atomic representing measure from a flat
  moment vector (column-space basis, multiplication matrices, simultaneous
  diagonalisation through a random convex combination).
* :func:`verify_atoms_in_K` and :func:`feasibility_gap` -- minimise
  ``g_j(x, .)`` over the quantifier set by grid/sample search plus local
  refinement.
* :func:`certificate_query` / :func:`certificate_extract` -- Gram matrices of the
  SOS multipliers from the dual of a membership SDP.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import lsqr

from .momat import TruncatedSequence, moment_matrix
from .polyring import Polynomial, basis, monomial_vector, n_monomials

__all__ = [
    "ExtractionError",
    "FlatnessVerdict",
    "AtomicMeasure",
    "Certificate",
    "numerical_rank",
    "flatness_check",
    "extract_atoms",
    "verify_atoms_in_K",
    "feasibility_gap",
    "certificate_query",
    "certificate_extract",
    "factor_gram",
]

RANK_TOL = 1e-6


class ExtractionError(RuntimeError):
    """Atom extraction failed; ``diagnostics`` holds the offending numbers."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


def numerical_rank(M: np.ndarray, tol: float = RANK_TOL) -> int:
    """Number of singular values above ``tol * sigma_max``."""
    s = np.linalg.svd(np.atleast_2d(M), compute_uv=False)
    if s.size == 0 or s[0] <= 0:
        return 0
    return int((s > tol * s[0]).sum())


@dataclass(frozen=True)
class FlatnessVerdict:
    d: int
    d_g: int
    ranks: Tuple[int, ...]          # rank H^(t)[w] for t = 0..d
    flat: bool
    rank: int                       # common rank when flat, else rank H^(d)
    k_flat: Optional[int]           # smallest t <= d - d_g with rank H^(t) = rank H^(d)
    tol: float

    @property
    def rank_pair(self) -> Tuple[int, int]:
        t = self.k_flat if self.k_flat is not None else max(self.d - self.d_g, 0)
        return self.ranks[t], self.ranks[self.d]


def flatness_check(w: TruncatedSequence, d_g: int, tol: float = RANK_TOL) -> FlatnessVerdict:
    """Test ``rank H^(t)[w] = rank H^(d)[w]`` for some ``t <= d - d_g``.

    ``d`` is the half-degree of ``w``.  Ranks are numerical (see
    :func:`numerical_rank`).
    """
    d = w.half_degree
    if d_g < 0:
        raise ValueError("d_g must be non-negative")
    ranks = tuple(numerical_rank(moment_matrix(w, t), tol) for t in range(d + 1))
    k_flat = None
    for t in range(0, d - d_g + 1):
        if ranks[t] == ranks[d]:
            k_flat = t
            break
    return FlatnessVerdict(d, d_g, ranks, k_flat is not None, ranks[d], k_flat, tol)


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    atoms: np.ndarray = field(repr=True)     # r x n
    weights: np.ndarray = field(repr=True)   # r

    def moments(self, degree: int) -> TruncatedSequence:
        return TruncatedSequence.from_atoms(self.atoms, self.weights, degree)

    def __len__(self) -> int:
        return self.weights.size


def extract_atoms(w: TruncatedSequence, r: int, seed: int = 0,
                  rank_tol: float = RANK_TOL, t: Optional[int] = None) -> AtomicMeasure:
    """Recover ``r`` atoms and weights from a flat ``w``.

    ``t`` selects the moment matrix ``H^(t)`` used (default: half-degree of
    ``w``).  Basis monomials are chosen among degree ``< t`` so that their
    products with each coordinate stay inside ``[x]_t``.
    """
    n = w.n
    t = w.half_degree if t is None else t
    if t < 1:
        raise ExtractionError("need a moment matrix of order at least 1")
    H = moment_matrix(w, t)
    U, s, _ = np.linalg.svd(H)
    if r < 1 or r > s.size:
        raise ExtractionError(f"rank {r} out of range", singular_values=s)
    V = U[:, :r] * np.sqrt(s[:r])
    low = n_monomials(n, t - 1)
    # pivoted QR on the rows of degree < t picks a well-conditioned monomial basis
    _, R, piv = sla.qr(V[:low].T, pivoting=True, mode="economic")
    if R.shape[0] < r or abs(R[r - 1, r - 1]) <= rank_tol * abs(R[0, 0]):
        raise ExtractionError("no monomial basis of full rank among degree < t",
                              diagonal=np.abs(np.diag(R)))
    rows = np.sort(piv[:r])
    C = np.linalg.solve(V[rows].T, V.T).T          # each monomial in terms of the basis
    bt = basis(n, t)
    bexp = bt.exponents[rows]
    mult = []
    for i in range(n):
        shifted = bexp.copy()
        shifted[:, i] += 1
        mult.append(C[bt.index(shifted)])
    rng = np.random.default_rng(seed)
    rho = rng.random(n)
    rho /= rho.sum()
    M = sum(c * Ni for c, Ni in zip(rho, mult))
    # ordered real Schur form gives orthonormal vectors for the eigenvalue ordering
    T, Q = sla.schur(M, output="real")
    sub = np.abs(np.diag(T, -1))
    if sub.size and sub.max() > 1e-8 * max(1.0, np.abs(T).max()):
        raise ExtractionError("complex eigenvalues in the multiplication operator",
                              subdiagonal=sub)
    atoms = np.array([[Q[:, j] @ Ni @ Q[:, j] for Ni in mult] for j in range(r)])
    A = monomial_vector(atoms, w.degree).T
    lam, *_ = np.linalg.lstsq(A, w.values, rcond=None)
    return AtomicMeasure(atoms, lam)


# ---------------------------------------------------------------------------
# searching the quantifier set
# ---------------------------------------------------------------------------

def _piece_candidates(piece, budget: int, rng: np.random.Generator) -> np.ndarray:
    if piece.region is not None:
        return np.atleast_2d(piece.region.search_points(budget, rng))
    meas = piece.measure
    if meas.kind in ("samples", "discrete"):
        return meas.points
    if meas.kind == "factorial":
        return meas.truncated_atoms()[0]
    raise ValueError(f"no search points for a {meas.kind} measure without a region")


def _min_over_piece(g: Polynomial, x: np.ndarray, piece, budget: int,
                    rng: np.random.Generator, n_refine: int = 5) -> Tuple[float, np.ndarray]:
    gx = g.substitute_x(x)

    def fun(Y):
        return gx.eval_batch(None, Y)

    cand = _piece_candidates(piece, budget, rng)
    vals = fun(cand)
    order = np.argsort(vals)[:n_refine]
    best_v, best_y = float(vals[order[0]]), cand[order[0]]
    if piece.region is not None:
        for i in order:
            y, v = piece.region.refine(fun, cand[i])
            if v < best_v:
                best_v, best_y = v, y
    return best_v, best_y


def _min_over_Q(g: Polynomial, x: np.ndarray, pieces, budget: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    return min(_min_over_piece(g, x, p, budget, rng)[0] for p in pieces)


def feasibility_gap(xhat, problem, budget: int = 20000, seed: int = 0) -> Tuple[List[float], float]:
    """``delta_j = min_{y in Q} g_j(xhat, y)`` and ``delta = min_j delta_j``.

    ``problem`` needs ``constraints`` and ``pieces``; without quantified
    constraints the gap is ``+inf``.
    """
    x = np.asarray(xhat, dtype=float)
    deltas = [_min_over_Q(g, x, problem.pieces, budget, seed) for g in problem.constraints]
    return deltas, (min(deltas) if deltas else math.inf)


def verify_atoms_in_K(atoms, constraints: Sequence[Polynomial], problem_or_pieces,
                      budget: int = 20000, seed: int = 0) -> np.ndarray:
    """Margins ``min_{y in Q} g_j(u, y)`` with shape ``(n_atoms, n_constraints)``."""
    pieces = getattr(problem_or_pieces, "pieces", problem_or_pieces)
    atoms = np.asarray(atoms, dtype=float)
    if atoms.size == 0:
        return np.zeros((0, len(constraints)))
    atoms = np.atleast_2d(atoms)
    return np.array([[_min_over_Q(g, u, pieces, budget, seed) for g in constraints]
                     for u in atoms])


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Certificate:
    """``f = sum_j int tau_j g_j dnu (+ ideal terms)`` with ``tau_j`` given by Gram matrices.

    ``grams[j]`` is indexed by ``[y]_{l'} (x) [x]_{k'}`` (y-major) for the
    generator listed in ``labels[j]``.
    """

    member: bool
    status: str
    lam: float                               # optimal slack: f - lam is certified
    grams: List[np.ndarray] = field(default_factory=list)
    labels: List[str] = field(default_factory=list)
    offsets: List[Tuple[int, int]] = field(default_factory=list)
    residual: float = math.inf
    eig_floors: List[float] = field(default_factory=list)
    ideal_multipliers: Optional[np.ndarray] = None
    correction_norm: float = 0.0
    message: str = ""


def certificate_query(problem, f: Polynomial, k: int, l: Optional[int] = None,
                      tol: float = 1e-9):
    """Build and solve the membership SDP for ``f`` at order ``(k, l)``.

    This is the moment relaxation with objective ``f`` and every quantified
    block kept in Kronecker form, so that the dual matrices are Gram matrices
    over ``[y]_{l'} (x) [x]_{k'}``.
    """
    from .relaxation import SipProblem, build_relaxation
    from .sdp import sdp_solve

    q = SipProblem(problem.n, problem.m, f.with_arity(problem.n, problem.m),
                   list(problem.constraints), list(problem.pieces),
                   list(problem.equalities), list(problem.inequalities), problem.name)
    inst = build_relaxation(q, k, l, reduce_kron=False)
    return inst, sdp_solve(inst.conic, tol=tol)


def certificate_extract(inst, sol, polish: bool = True, floor_tol: float = 1e-8,
                        residual_tol: float = 1e-8) -> Certificate:
    """Recover the Gram matrices and check the coefficient identity.

    The multiplier of ``w_0 = 1`` (the slack ``lam``) is folded into the
    constant of ``tau_0`` when non-negative.  With ``polish`` the remaining
    coefficient mismatch is removed by the minimum-norm Gram correction; the
    reported residual is recomputed from the final matrices either way.
    """
    if sol.status in ("unbounded",):
        return Certificate(False, sol.status, -math.inf,
                           message="membership SDP has no certificate at this order")
    if sol.status == "infeasible":
        return Certificate(False, sol.status, math.nan,
                           message="moment side infeasible; the quantified set looks empty")
    if not sol.dual_blocks:
        return Certificate(False, sol.status, math.nan, message="solver returned no dual data")
    conic = inst.conic
    f = conic.objective
    Gs = [np.array(G) for G in sol.dual_blocks]
    coefT = [b.coef.T.tocsr() for b in conic.blocks]
    E = sp.csr_matrix(conic.eq_matrix)

    def model(Gs, mu):
        out = sum(cT @ G.ravel() for cT, G in zip(coefT, Gs))
        return out + E.T @ mu

    r0 = f - sum(cT @ G.ravel() for cT, G in zip(coefT, Gs))
    mu = lsqr(E.T, r0, atol=1e-15, btol=1e-15, iter_lim=10000)[0] if E.shape[0] else np.zeros(0)
    lam = float(mu[0])
    corr = 0.0
    if polish:
        # minimum-norm Gram correction for the leftover mismatch
        resid = f - model(Gs, mu)
        A = sp.hstack(coefT).tocsr()
        dz = lsqr(A, resid, atol=1e-16, btol=1e-16, iter_lim=20000)[0]
        pos = 0
        for j, b in enumerate(conic.blocks):
            step = dz[pos:pos + b.size ** 2].reshape(b.size, b.size)
            Gs[j] = Gs[j] + 0.5 * (step + step.T)
            pos += b.size ** 2
        corr = float(np.linalg.norm(dz))
    member = lam >= -floor_tol
    if member and lam > 0:
        # fold the slack into the constant term of the unit-constraint multiplier
        b0 = conic.blocks[0]
        unit = b0.coef[0, 0]
        Gs[0] = Gs[0].copy()
        Gs[0][0, 0] += lam / unit
        mu = mu.copy()
        mu[0] = 0.0
    residual = float(np.abs(f - model(Gs, mu)).max())
    floors = [float(np.linalg.eigvalsh(G).min()) for G in Gs]
    scale = [max(1.0, float(np.trace(G))) for G in Gs]
    psd = all(fl >= -floor_tol * s for fl, s in zip(floors, scale))
    member = member and psd and residual <= residual_tol
    labels = [b.label for b in conic.blocks]
    offsets = [(i.k_prime, i.l_prime) for i in inst.info]
    msg = "" if member else (
        "no certificate at this order" if lam < -floor_tol else
        "certificate accuracy below tolerance")
    return Certificate(member, sol.status, lam, Gs, labels, offsets, residual, floors,
                       mu[1:] if mu.size > 1 else None, corr, msg)


def factor_gram(G: np.ndarray, clip: float = 0.0) -> Tuple[np.ndarray, float]:
    """Write ``G ~ F^T F``; rows of ``F`` are the SOS term coefficients.

    Negative eigenvalues are clipped to zero; the second return value is the
    spectral norm of what was clipped.
    """
    ev, U = np.linalg.eigh(0.5 * (G + G.T))
    neg = ev < clip
    clipped = float(np.abs(ev[neg]).max()) if neg.any() else 0.0
    keep = ~neg
    F = (U[:, keep] * np.sqrt(ev[keep])).T
    return F, clipped
