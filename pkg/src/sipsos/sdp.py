"""Linear SDPs with affine PSD blocks, solved by a primal-dual interior-point method.

The problem form is::

    minimize    c @ w
    subject to  F_j(w) = C_j + sum_i w_i A_{j,i}  PSD    for each block j
                E @ w = b

The interior-point iterations come from CVXOPT's ``solvers.sdp`` (Nesterov-Todd
scaling).  This module owns the problem representation, row reduction of the
equalities, status mapping, residual bookkeeping and SDPA export.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "AffineBlock",
    "ConicProblem",
    "ConicSolution",
    "sdp_solve",
    "write_sdpa",
]

STATUSES = ("optimal", "near-optimal", "infeasible", "unbounded", "numerical-failure")


@dataclass(frozen=True, eq=False)
class AffineBlock:
    """Symmetric matrix ``const + mat(coef @ w)`` of side ``size``.

    ``coef`` has one row per matrix entry (row-major ``i*size + j``) and one
    column per variable.
    """

    size: int
    coef: sp.csc_matrix = field(repr=False)
    const: Optional[np.ndarray] = field(default=None, repr=False)
    label: str = ""

    def __post_init__(self):
        if self.coef.shape[0] != self.size * self.size:
            raise ValueError(f"block {self.label!r}: coefficient rows {self.coef.shape[0]} "
                             f"!= size^2 = {self.size ** 2}")
        if self.const is not None and self.const.shape != (self.size, self.size):
            raise ValueError(f"block {self.label!r}: constant term has the wrong shape")

    @property
    def nvars(self) -> int:
        return self.coef.shape[1]

    def evaluate(self, w: np.ndarray) -> np.ndarray:
        M = np.asarray(self.coef @ np.asarray(w, float)).reshape(self.size, self.size)
        if self.const is not None:
            M = M + self.const
        return 0.5 * (M + M.T)

    def coefficient(self, i: int) -> np.ndarray:
        """Dense ``A_i``."""
        return self.coef[:, i].toarray().reshape(self.size, self.size)

    def adjoint(self, Z: np.ndarray) -> np.ndarray:
        """``(<A_i, Z>)_i``."""
        return np.asarray(self.coef.T @ np.asarray(Z, float).ravel()).ravel()

    def is_symmetric(self, tol: float = 0.0) -> bool:
        s = self.size
        perm = (np.arange(s * s).reshape(s, s).T).ravel()
        diff = self.coef - self.coef[perm, :]
        ok = (abs(diff).max() if diff.nnz else 0.0) <= tol
        if self.const is not None:
            ok = ok and np.abs(self.const - self.const.T).max() <= tol
        return bool(ok)


@dataclass(frozen=True, eq=False)
class ConicProblem:
    """``min c@w`` over affine PSD blocks and linear equalities."""

    objective: np.ndarray
    blocks: Sequence[AffineBlock]
    eq_matrix: sp.csr_matrix
    eq_rhs: np.ndarray
    objective_offset: float = 0.0

    def __post_init__(self):
        nv = self.objective.shape[0]
        for b in self.blocks:
            if b.nvars != nv:
                raise ValueError(f"block {b.label!r} has {b.nvars} variables, expected {nv}")
        if self.eq_matrix.shape[1] != nv or self.eq_matrix.shape[0] != self.eq_rhs.shape[0]:
            raise ValueError("equality system dimensions are inconsistent")

    @property
    def nvars(self) -> int:
        return self.objective.shape[0]


@dataclass(eq=False)
class ConicSolution:
    status: str
    w: Optional[np.ndarray]
    objective: float
    dual_blocks: List[np.ndarray]
    dual_eq: Optional[np.ndarray]
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int = 0
    info: Dict[str, object] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "near-optimal")


def _reduce_rows(E: np.ndarray, b: np.ndarray, tol: float = 1e-10):
    # drop linearly dependent equality rows; inconsistent systems are reported
    if E.shape[0] == 0:
        return E, b, True
    aug = np.hstack([E, b[:, None]])
    q, r, piv = _qr_pivot(E.T)
    diag = np.abs(np.diag(r)) if r.size else np.zeros(0)
    rank = int((diag > tol * max(1.0, diag.max() if diag.size else 0.0)).sum())
    keep = np.sort(piv[:rank])
    Ek, bk = E[keep], b[keep]
    # consistency: the dropped rows must be combinations of the kept ones
    if rank < E.shape[0]:
        sol, *_ = np.linalg.lstsq(Ek.T, aug[:, :-1].T, rcond=None)
        resid = np.abs(sol.T @ bk - b).max()
        consistent = resid <= 1e-8 * max(1.0, np.abs(b).max())
    else:
        consistent = True
    return Ek, bk, consistent


def _qr_pivot(M: np.ndarray):
    from scipy.linalg import qr
    return qr(M, mode="economic", pivoting=True)


def sdp_solve(p: ConicProblem, tol: float = 1e-7, max_iter: int = 200,
              verbose: bool = False, loosest: float = 1e-7) -> ConicSolution:
    """Solve ``p``; returns a primal-dual pair or an honest failure status.

    ``tol`` sets CVXOPT's absolute/relative gap and feasibility tolerances.  A
    run that stops on the iteration cap with small residuals is reported as
    ``near-optimal``.  When a tolerance tighter than ``loosest`` breaks down
    the solve is repeated with a ten times looser one; ``info["tol"]`` records
    the tolerance of the returned solution.
    """
    t = tol
    while True:
        sol = _solve_once(p, t, max_iter, verbose)
        sol.info["tol"] = t
        if sol.status != "numerical-failure" or t >= loosest:
            return sol
        t *= 10.0


def _solve_once(p: ConicProblem, tol: float, max_iter: int, verbose: bool) -> ConicSolution:
    from cvxopt import matrix, solvers, spmatrix

    E = p.eq_matrix.toarray() if sp.issparse(p.eq_matrix) else np.asarray(p.eq_matrix, float)
    Ek, bk, consistent = _reduce_rows(E, np.asarray(p.eq_rhs, float))
    if not consistent:
        return ConicSolution("infeasible", None, np.inf, [], None, np.inf, np.nan, np.nan,
                             info={"reason": "inconsistent equality rows"})

    Gs, hs = [], []
    for blk in p.blocks:
        # cvxopt: G x + s = h, s PSD  ->  s = C + A(w)  with G = -A, h = C
        G = -sp.coo_matrix(blk.coef)
        h = np.zeros((blk.size, blk.size)) if blk.const is None else blk.const
        Gs.append(spmatrix(G.data.tolist(), G.row.tolist(), G.col.tolist(), G.shape))
        hs.append(matrix(np.asarray(h, float)))

    opts = {"show_progress": verbose, "abstol": tol, "reltol": tol, "feastol": tol,
            "maxiters": max_iter}
    c = matrix(np.asarray(p.objective, float))
    kwargs = {}
    if Ek.shape[0]:
        kwargs = {"A": matrix(Ek), "b": matrix(bk)}
    try:
        res = solvers.sdp(c, Gs=Gs, hs=hs, options=opts, **kwargs)
    except (ValueError, ArithmeticError) as exc:
        return ConicSolution("numerical-failure", None, np.nan, [], None, np.inf, np.inf, np.inf,
                             info={"reason": str(exc)})

    raw = res["status"]
    w = None if res["x"] is None else np.array(res["x"]).ravel()
    zs = res.get("zs")
    zs = [np.array(z) for z in zs] if zs and zs[0] is not None else []
    y = None if res["y"] is None else np.array(res["y"]).ravel()
    pres, dres, gap = (np.inf if res.get(key) is None else abs(float(res[key]))
                       for key in ("primal infeasibility", "dual infeasibility", "relative gap"))
    iters = int(res.get("iterations", 0))
    info = {"cvxopt_status": raw}

    if raw == "optimal":
        status = "optimal"
    elif raw == "primal infeasible":
        return ConicSolution("infeasible", None, np.inf, zs, y, pres, dres, gap, iters, info)
    elif raw == "dual infeasible":
        return ConicSolution("unbounded", w, -np.inf, [], None, pres, dres, gap, iters, info)
    else:
        near = max(pres, dres) <= 1e3 * tol and (gap <= 1e3 * tol or
                                                  abs(res.get("gap") or np.inf) <= 1e3 * tol)
        status = "near-optimal" if (w is not None and near) else "numerical-failure"

    obj = float(p.objective @ w) + p.objective_offset if w is not None else np.nan
    dual_blocks = [0.5 * (Z + Z.T) for Z in zs]
    return ConicSolution(status, w, obj, dual_blocks, y, pres, dres, gap, iters, info)


def write_sdpa(p: ConicProblem, stream: io.TextIOBase | None = None) -> str:
    """Dump ``p`` in sparse SDPA format (``.dat-s``).

    The SDPA primal reads ``min c@x  s.t.  sum_i x_i F_i - F_0 PSD``.  Each
    equality row ``e@w = b`` becomes a 2x2 diagonal LP-style block
    ``diag(e@w - b, b - e@w)``.  Block order: the PSD blocks of ``p`` in order,
    then one diagonal block holding all equality pairs.
    """
    out = io.StringIO()
    nv = p.nvars
    E = sp.csr_matrix(p.eq_matrix)
    n_eq = E.shape[0]
    sizes = [b.size for b in p.blocks]
    out.write(f"\"sipsos export: {len(p.blocks)} PSD blocks, {n_eq} equality rows\"\n")
    out.write(f"{nv}\n")
    out.write(f"{len(sizes) + (1 if n_eq else 0)}\n")
    out.write(" ".join(str(s) for s in sizes) + (f" {-2 * n_eq}" if n_eq else "") + "\n")
    out.write(" ".join(repr(float(v)) for v in p.objective) + "\n")
    entries = []
    for j, blk in enumerate(p.blocks, start=1):
        if blk.const is not None:
            for r, c in zip(*np.nonzero(np.triu(blk.const))):
                # SDPA F_0 enters with a minus sign
                entries.append((0, j, r + 1, c + 1, -float(blk.const[r, c])))
        coo = blk.coef.tocoo()
        for row, var, val in zip(coo.row, coo.col, coo.data):
            r, c = divmod(int(row), blk.size)
            if r <= c and val != 0.0:
                entries.append((int(var) + 1, j, r + 1, c + 1, float(val)))
    if n_eq:
        jb = len(p.blocks) + 1
        coo = E.tocoo()
        for row, var, val in zip(coo.row, coo.col, coo.data):
            entries.append((int(var) + 1, jb, 2 * row + 1, 2 * row + 1, float(val)))
            entries.append((int(var) + 1, jb, 2 * row + 2, 2 * row + 2, -float(val)))
        for row, rhs in enumerate(np.asarray(p.eq_rhs, float)):
            if rhs != 0.0:
                entries.append((0, jb, 2 * row + 1, 2 * row + 1, float(rhs)))
                entries.append((0, jb, 2 * row + 2, 2 * row + 2, -float(rhs)))
    entries.sort()
    for mat, blk, r, c, v in entries:
        out.write(f"{mat} {blk} {r} {c} {v!r}\n")
    text = out.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def read_sdpa(text: str) -> ConicProblem:
    """Parse the output of :func:`write_sdpa` back into a :class:`ConicProblem`."""
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith(("\"", "*"))]
    nv = int(lines[0].split()[0])
    nblocks = int(lines[1].split()[0])
    sizes = [int(t) for t in lines[2].replace(",", " ").split()[:nblocks]]
    c = np.array([float(t) for t in lines[3].replace(",", " ").split()[:nv]])
    psd = [(j, s) for j, s in enumerate(sizes, start=1) if s > 0]
    diag = [(j, -s) for j, s in enumerate(sizes, start=1) if s < 0]
    coefs: Dict[int, Dict] = {j: {} for j, _ in psd}
    consts: Dict[int, np.ndarray] = {j: np.zeros((s, s)) for j, s in psd}
    n_eq = diag[0][1] // 2 if diag else 0
    E = np.zeros((n_eq, nv))
    b = np.zeros(n_eq)
    for ln in lines[4:]:
        mat, blk, r, col, v = ln.split()
        mat, blk, r, col, v = int(mat), int(blk), int(r) - 1, int(col) - 1, float(v)
        if diag and blk == diag[0][0]:
            if r % 2 == 0:
                if mat == 0:
                    b[r // 2] = v
                else:
                    E[r // 2, mat - 1] = v
            continue
        s = sizes[blk - 1]
        if mat == 0:
            consts[blk][r, col] = consts[blk][col, r] = -v
        else:
            d = coefs[blk]
            d[(r * s + col, mat - 1)] = v
            d[(col * s + r, mat - 1)] = v
    blocks = []
    for j, s in psd:
        d = coefs[j]
        rows = [k[0] for k in d]
        cols = [k[1] for k in d]
        coef = sp.csc_matrix((list(d.values()), (rows, cols)), shape=(s * s, nv))
        const = consts[j] if np.any(consts[j]) else None
        blocks.append(AffineBlock(s, coef, const, label=f"block{j}"))
    return ConicProblem(c, blocks, sp.csr_matrix(E), b)
