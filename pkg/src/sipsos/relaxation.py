"""Moment relaxations of quantified polynomial programs.

For an order ``k`` (and measure order ``l``, default ``k``) the relaxation is::

    minimize    R_w(f)
    subject to  V_{c}^{(2k)}[w] = 0                    for equality constraints c
                L_{c}^{(k - ceil(deg c/2))}[w]  PSD     for inequality constraints c
                L_{nu_i, g_j}^{(k,l)}[w]        PSD     for j = 0..s, each measure piece nu_i
                w_0 = 1

with ``g_0 = 1``.  :func:`run_hierarchy` sweeps ``k`` and post-processes every
order (first moments, feasibility gaps, flatness and atom extraction).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .measures import MeasureSpec, moment_table
from .momat import (
    OrderTooSmallError,
    TruncatedSequence,
    localizing_coefficients,
    localizing_vector_coefficients,
    quantified_localizing_coefficients,
)
from .polyring import Polynomial, n_monomials, separable_decomposition
from .regions import QuantifierSet
from .sdp import AffineBlock, ConicProblem, ConicSolution, sdp_solve

__all__ = [
    "OrderTooSmallError",
    "QuantifierPiece",
    "SipProblem",
    "BlockInfo",
    "RelaxationInstance",
    "SolveReport",
    "k_min",
    "flat_offset",
    "build_relaxation",
    "solve_relaxation",
    "run_hierarchy",
]

PSD_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class QuantifierPiece:
    """One piece ``Q_i`` of the quantifier set with its measure ``nu_i``.

    ``region`` is used for feasibility-gap searches and may be ``None`` when only
    the measure is known (the measure's atoms or samples are searched then).
    """

    measure: MeasureSpec
    region: Optional[QuantifierSet] = None
    label: str = ""


@dataclass(eq=False)
class SipProblem:
    """``min f(x)`` over ``x`` in ``X`` with ``g_j(x, y) >= 0`` for all ``y`` in ``Q``."""

    n: int
    m: int
    objective: Polynomial
    constraints: List[Polynomial]
    pieces: List[QuantifierPiece]
    equalities: List[Polynomial] = field(default_factory=list)
    inequalities: List[Polynomial] = field(default_factory=list)
    name: str = ""
    options: Dict[str, object] = field(default_factory=dict)
    best_known: Optional[Tuple[Sequence[float], float]] = None

    def __post_init__(self):
        if not self.objective.is_x_only():
            raise ValueError("objective must depend on x only")
        for c in list(self.equalities) + list(self.inequalities):
            if not c.is_x_only():
                raise ValueError("X-constraints must depend on x only")
        if not self.pieces:
            raise ValueError("at least one quantifier piece is required")
        for p in self.pieces:
            if p.measure.ny != self.m:
                raise ValueError(f"measure arity {p.measure.ny} does not match m={self.m}")
        self.objective = self.objective.with_arity(self.n, self.m)
        self.constraints = [g.with_arity(self.n, self.m) for g in self.constraints]
        self.equalities = [c.with_arity(self.n, self.m) for c in self.equalities]
        self.inequalities = [c.with_arity(self.n, self.m) for c in self.inequalities]

    @property
    def max_x_degree(self) -> int:
        polys = [self.objective] + self.constraints + self.equalities + self.inequalities
        return max(p.deg_x for p in polys)

    @property
    def constraint_x_degree(self) -> int:
        polys = self.constraints + self.equalities + self.inequalities
        return max((p.deg_x for p in polys), default=0)


def flat_offset(problem: SipProblem) -> int:
    """Rank-stabilisation gap ``d_g = max(1, ceil(deg_x / 2))`` over all constraints."""
    return max(1, math.ceil(problem.constraint_x_degree / 2))


def k_min(problem: SipProblem, l: Optional[int] = None) -> int:
    """Smallest order with non-negative offsets and ``2k >= deg f``.

    When ``l`` is ``None`` it follows ``k``.
    """
    k = max(1, math.ceil(problem.objective.deg_x / 2))
    for c in problem.equalities + problem.inequalities:
        k = max(k, math.ceil(c.deg_x / 2))
    for g in problem.constraints:
        k = max(k, math.ceil(g.deg_x / 2))
        if l is None:
            k = max(k, math.ceil(g.deg_y / 2))
    if l is not None:
        for g in problem.constraints:
            if l - math.ceil(g.deg_y / 2) < 0:
                raise OrderTooSmallError(f"l = {l} is below the y-degree needs of a constraint")
    return k


@dataclass(frozen=True)
class BlockInfo:
    kind: str          # "quantified", "inequality"
    index: int         # j for quantified constraints (0 = the unit constraint), position otherwise
    piece: int         # measure piece, -1 when not applicable
    k_prime: int
    l_prime: int
    reduced: bool      # a single Kronecker summand Y (x) L replaced by L


@dataclass(eq=False)
class RelaxationInstance:
    k: int
    l: int
    n: int
    conic: ConicProblem
    info: List[BlockInfo]
    objective_poly: Polynomial
    generators: List[Polynomial] = field(default_factory=list)
    y_matrices: List[List[np.ndarray]] = field(default_factory=list)

    @property
    def nvars(self) -> int:
        return self.conic.nvars

    @property
    def blocks(self) -> Sequence[AffineBlock]:
        return self.conic.blocks


def _is_psd_nonzero(Y: np.ndarray) -> bool:
    ev = np.linalg.eigvalsh(Y)
    scale = np.abs(ev).max() if ev.size else 0.0
    return scale > 0 and ev.min() >= -PSD_TOL * scale


def build_relaxation(problem: SipProblem, k: int, l: Optional[int] = None,
                     reduce_kron: bool = True) -> RelaxationInstance:
    """Assemble the order-``(k, l)`` moment SDP.

    With ``reduce_kron`` a quantified block with a single Kronecker summand
    ``Y (x) L`` and ``Y`` PSD and nonzero is posed as ``L`` PSD, which is
    equivalent and much smaller.  Duplicate reduced blocks (the unit constraint
    on several pieces) are kept once.
    """
    l = k if l is None else l
    n, degree = problem.n, 2 * k
    N = n_monomials(n, degree)
    if problem.objective.deg_x > degree:
        raise OrderTooSmallError(f"objective degree {problem.objective.deg_x} exceeds 2k = {degree}")
    c = np.zeros(N)
    fc = problem.objective.x_coefficients()
    c[:fc.size] = fc

    blocks: List[AffineBlock] = []
    info: List[BlockInfo] = []
    ymats: List[List[np.ndarray]] = []
    seen_reduced = set()
    one = Polynomial.constant(1.0, n, problem.m)
    generators = [one] + list(problem.constraints)
    for pi, piece in enumerate(problem.pieces):
        need = 2 * l + max(g.deg_y for g in generators)
        table = None if piece.measure.kind == "samples" else moment_table(piece.measure, need)
        for j, g in enumerate(generators):
            coef, side, kp, lp, Ys = quantified_localizing_coefficients(
                g, piece.measure, k, l, n, degree, table)
            if reduce_kron and len(Ys) == 1 and _is_psd_nonzero(Ys[0]):
                key = (j, kp)
                if key in seen_reduced:
                    continue
                seen_reduced.add(key)
                gi = separable_decomposition(g)[0][0]
                # Y (x) L  PSD  <=>  L PSD, up to the positive scale of Y
                coef = localizing_coefficients(gi, kp, n, degree)
                side = n_monomials(n, kp)
                label = f"g{j}" if j else "moment"
                blocks.append(AffineBlock(side, coef.tocsc(), None, label))
                info.append(BlockInfo("quantified", j, pi, kp, lp, True))
            else:
                blocks.append(AffineBlock(side, coef, None, f"g{j}@piece{pi}"))
                info.append(BlockInfo("quantified", j, pi, kp, lp, False))
            ymats.append(Ys)

    for i, cin in enumerate(problem.inequalities):
        kp = k - math.ceil(cin.deg_x / 2)
        coef = localizing_coefficients(cin, kp, n, degree)
        blocks.append(AffineBlock(n_monomials(n, kp), coef.tocsc(), None, f"ineq{i}"))
        info.append(BlockInfo("inequality", i, -1, kp, 0, False))
        ymats.append([])

    rows = [sp.csr_matrix(([1.0], ([0], [0])), shape=(1, N))]
    rhs = [np.ones(1)]
    for ceq in problem.equalities:
        V = localizing_vector_coefficients(ceq, degree, n)
        rows.append(V)
        rhs.append(np.zeros(V.shape[0]))
    E = sp.vstack(rows).tocsr()
    b = np.concatenate(rhs)
    conic = ConicProblem(c, blocks, E, b)
    return RelaxationInstance(k, l, n, conic, info, problem.objective, generators, ymats)


def solve_relaxation(inst: RelaxationInstance, tol: float = 1e-7) -> Tuple[ConicSolution, Optional[TruncatedSequence]]:
    sol = sdp_solve(inst.conic, tol=tol)
    w = TruncatedSequence(inst.n, 2 * inst.k, sol.w) if sol.w is not None and sol.ok else None
    return sol, w


@dataclass(eq=False)
class SolveReport:
    """Outcome of one order of the hierarchy."""

    k: int
    l: int
    status: str
    gamma: float
    w: Optional[TruncatedSequence] = None
    xhat: Optional[np.ndarray] = None
    deltas: List[float] = field(default_factory=list)
    delta: float = math.inf
    flatness: Optional[object] = None
    atoms: Optional[object] = None
    atom_margins: Optional[np.ndarray] = None
    certificate: Optional[object] = None
    seconds: float = 0.0
    residuals: Tuple[float, float, float] = (math.nan, math.nan, math.nan)
    message: str = ""
    nvars: int = 0
    block_sizes: Tuple[int, ...] = ()

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "near-optimal")


def run_hierarchy(problem: SipProblem, k_range: Optional[Sequence[int]] = None,
                  l: Optional[int] = None, tol: float = 1e-7, rank_tol: float = 1e-6,
                  seed: int = 0, gap_budget: int = 20000, extract: bool = True,
                  reduce_kron: bool = True) -> List[SolveReport]:
    """Build, solve and post-process each order in ``k_range`` (ascending).

    Failures at one order are recorded in its report and the sweep continues.
    """
    from .extraction import (ExtractionError, extract_atoms, feasibility_gap,
                             flatness_check, verify_atoms_in_K)

    if k_range is None:
        k0 = k_min(problem, l)
        k_range = range(k0, k0 + 3)
    d_g = flat_offset(problem)
    reports = []
    for k in sorted(k_range):
        lk = k if l is None else l
        t0 = time.perf_counter()
        try:
            inst = build_relaxation(problem, k, lk, reduce_kron=reduce_kron)
        except (OrderTooSmallError, ValueError) as exc:
            reports.append(SolveReport(k, lk, "order-too-small", math.nan, message=str(exc),
                                       seconds=time.perf_counter() - t0))
            continue
        sol, w = solve_relaxation(inst, tol)
        rep = SolveReport(k, lk, sol.status, sol.objective if sol.ok else math.nan,
                          residuals=(sol.primal_residual, sol.dual_residual, sol.gap),
                          nvars=inst.nvars, block_sizes=tuple(b.size for b in inst.blocks))
        if sol.status == "infeasible":
            rep.message = "relaxation is infeasible"
        if w is not None:
            rep.w = w
            rep.xhat = w.first_moments()
            rep.deltas, rep.delta = feasibility_gap(rep.xhat, problem, gap_budget, seed=seed)
            if extract and k >= d_g:
                verdict = flatness_check(w, d_g, rank_tol)
                rep.flatness = verdict
                if verdict.flat:
                    try:
                        rep.atoms = extract_atoms(w, verdict.rank, seed=seed, rank_tol=rank_tol)
                        rep.atom_margins = verify_atoms_in_K(
                            rep.atoms.atoms, problem.constraints,
                            problem, budget=gap_budget, seed=seed)
                    except ExtractionError as exc:
                        rep.message = f"extraction failed: {exc}"
        rep.seconds = time.perf_counter() - t0
        reports.append(rep)
    return reports
