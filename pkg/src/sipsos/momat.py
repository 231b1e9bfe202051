"""Moment, localizing and quantified localizing matrices.

Every builder comes in two flavours: a numeric one that takes a
:class:`TruncatedSequence`, and a ``*_coefficients`` one returning the sparse
linear map ``w -> vec(M[w])`` used to pose SDP blocks.  The numeric versions are
just the coefficient maps applied to ``w.values``.

Quantified localizing matrices use the ``[y]_{l'} (x) [x]_{k'}`` basis order,
i.e. ``sum_i Y_i (x) L_i`` with the y-index varying slowest.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .measures import MeasureSpec, MomentTable, moment_table
from .polyring import Polynomial, basis, monomial_vector, n_monomials, separable_decomposition

__all__ = [
    "OrderTooSmallError",
    "TruncatedSequence",
    "QuantifiedLocalizer",
    "degree_offsets",
    "moment_matrix",
    "localizing_matrix",
    "localizing_vector",
    "y_matrix",
    "quantified_localizing_matrix",
    "localizing_coefficients",
    "localizing_vector_coefficients",
    "quantified_localizing_coefficients",
]


class OrderTooSmallError(ValueError):
    """A constraint's degree exceeds what the relaxation order can hold."""


@dataclass(frozen=True, eq=False)
class TruncatedSequence:
    """A moment vector ``w = (w_alpha)`` for ``alpha`` in ``N^n_degree``."""

    n: int
    degree: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).ravel()
        if vals.size != n_monomials(self.n, self.degree):
            raise ValueError(f"expected {n_monomials(self.n, self.degree)} values, got {vals.size}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def half_degree(self) -> int:
        return self.degree // 2

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, alpha) -> float:
        return float(self.values[basis(self.n, self.degree).index(np.asarray(alpha))])

    def riesz(self, p: Polynomial) -> float:
        """``R_w(p) = sum_alpha p_alpha w_alpha`` for an x-only ``p``."""
        if p.deg_x > self.degree:
            raise ValueError(f"degree {p.deg_x} exceeds sequence degree {self.degree}")
        if p.is_zero():
            return 0.0
        # graded order: [x]_d is a prefix of [x]_degree
        coef = p.x_coefficients()
        return float(coef @ self.values[:coef.size])

    def first_moments(self) -> np.ndarray:
        """``(w_{e_1}, ..., w_{e_n})``."""
        return np.array(self.values[1:self.n + 1])

    def truncate(self, degree: int) -> "TruncatedSequence":
        if degree > self.degree:
            raise ValueError("cannot extend a truncated sequence")
        return TruncatedSequence(self.n, degree, self.values[:n_monomials(self.n, degree)])

    @classmethod
    def from_atoms(cls, points, weights, degree: int) -> "TruncatedSequence":
        """``sum_i lambda_i [u_i]_degree``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lam = np.asarray(weights, dtype=float)
        return cls(pts.shape[1], degree, lam @ monomial_vector(pts, degree))

    @classmethod
    def from_moment_matrix(cls, H: np.ndarray, n: int) -> "TruncatedSequence":
        """Read ``w`` of degree ``2k`` off ``H^(k)[w]`` (entries are averaged over
        the Hankel classes)."""
        H = np.asarray(H, dtype=float)
        s = H.shape[0]
        k = 0
        while n_monomials(n, k) < s:
            k += 1
        if n_monomials(n, k) != s or H.shape != (s, s):
            raise ValueError(f"matrix side {s} is not C(n+k, k) for n={n}")
        b = basis(n, k)
        idx = basis(n, 2 * k).index(b.exponents[:, None, :] + b.exponents[None, :, :])
        N = n_monomials(n, 2 * k)
        acc = np.bincount(idx.ravel(), weights=H.ravel(), minlength=N)
        cnt = np.bincount(idx.ravel(), minlength=N)
        return cls(n, 2 * k, acc / cnt)


def degree_offsets(g: Polynomial, k: int, l: int) -> Tuple[int, int]:
    """``(k - ceil(deg_x g / 2), l - ceil(deg_y g / 2))``; negatives mean the order is too small."""
    return k - math.ceil(g.deg_x / 2), l - math.ceil(g.deg_y / 2)


# ---------------------------------------------------------------------------
# coefficient maps
# ---------------------------------------------------------------------------

def _coef_terms(c: Polynomial):
    # exponent array and coefficients of an x-only polynomial
    if not c.is_x_only():
        raise ValueError("expected an x-only polynomial")
    items = list(c.items())
    if not items:
        return np.zeros((0, c.nx), dtype=np.int64), np.zeros(0)
    ex = np.array([ax for (ax, _), _ in items], dtype=np.int64).reshape(len(items), c.nx)
    cf = np.array([v for _, v in items])
    return ex, cf


@lru_cache(maxsize=128)
def _hankel_index(n: int, k: int, total: int) -> np.ndarray:
    # index of alpha+beta inside N^n_total for alpha, beta in N^n_k, flattened row-major
    b = basis(n, k)
    return basis(n, total).index(b.exponents[:, None, :] + b.exponents[None, :, :]).ravel()


def localizing_coefficients(c: Polynomial, k_prime: int, n: int, degree: int) -> sp.csc_matrix:
    """Sparse map ``w -> vec(L_c^(k')[w])`` with ``w`` of length ``C(n+degree, degree)``.

    Entry ``(alpha, beta)`` of the matrix is ``sum_gamma c_gamma w_{alpha+beta+gamma}``.
    """
    if k_prime < 0:
        raise OrderTooSmallError(f"negative localizing order {k_prime}")
    if 2 * k_prime + c.deg_x > degree:
        raise OrderTooSmallError(
            f"localizing matrix needs degree {2 * k_prime + c.deg_x}, sequence has {degree}")
    b = basis(n, k_prime)
    S = len(b)
    N = n_monomials(n, degree)
    ex, cf = _coef_terms(c)
    if cf.size == 0:
        return sp.csc_matrix((S * S, N))
    pair = b.exponents[:, None, :] + b.exponents[None, :, :]          # S x S x n
    full = pair.reshape(S * S, 1, n) + ex[None, :, :]                  # S^2 x T x n
    cols = basis(n, degree).index(full).ravel()
    rows = np.repeat(np.arange(S * S), cf.size)
    vals = np.tile(cf, S * S)
    return sp.csc_matrix((vals, (rows, cols)), shape=(S * S, N))


def localizing_vector_coefficients(c: Polynomial, degree: int, n: int,
                                   w_degree: Optional[int] = None) -> sp.csr_matrix:
    """Sparse map ``w -> V_c^(degree)[w]``; rows indexed by ``N^n_{degree - deg c}``."""
    w_degree = degree if w_degree is None else w_degree
    if c.deg_x > degree:
        raise OrderTooSmallError(f"polynomial degree {c.deg_x} exceeds {degree}")
    if degree > w_degree:
        raise OrderTooSmallError(f"localizing vector needs degree {degree}, sequence has {w_degree}")
    b = basis(n, degree - c.deg_x)
    N = n_monomials(n, w_degree)
    ex, cf = _coef_terms(c)
    if cf.size == 0:
        return sp.csr_matrix((len(b), N))
    full = b.exponents[:, None, :] + ex[None, :, :]
    cols = basis(n, w_degree).index(full).ravel()
    rows = np.repeat(np.arange(len(b)), cf.size)
    vals = np.tile(cf, len(b))
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(b), N))


def _apply(coef: sp.spmatrix, w: TruncatedSequence, side: int) -> np.ndarray:
    M = np.asarray(coef @ w.values).reshape(side, side)
    return 0.5 * (M + M.T)


# ---------------------------------------------------------------------------
# numeric builders
# ---------------------------------------------------------------------------

def moment_matrix(w: TruncatedSequence, k: int) -> np.ndarray:
    """``H^(k)[w] = (w_{alpha+beta})``."""
    if 2 * k > w.degree:
        raise OrderTooSmallError(f"H^({k}) needs degree {2 * k}, sequence has {w.degree}")
    S = n_monomials(w.n, k)
    return w.values[_hankel_index(w.n, k, w.degree)].reshape(S, S).copy()


def localizing_matrix(w: TruncatedSequence, c: Polynomial, k: int) -> np.ndarray:
    """``L_c^(k')[w]`` with ``k' = k - ceil(deg c / 2)``."""
    kp = k - math.ceil(c.deg_x / 2)
    coef = localizing_coefficients(c, kp, w.n, w.degree)
    return _apply(coef, w, n_monomials(w.n, kp))


def localizing_vector(w: TruncatedSequence, c: Polynomial, degree: int) -> np.ndarray:
    """``V_c^(degree)[w]`` with entries ``sum_gamma c_gamma w_{alpha+gamma}``."""
    return np.asarray(localizing_vector_coefficients(c, degree, w.n, w.degree) @ w.values)


def _table_for(spec: MeasureSpec, degree: int, table: Optional[MomentTable]) -> MomentTable:
    if table is not None and table.max_degree >= degree:
        return table
    return moment_table(spec, degree)


def y_matrix(spec: MeasureSpec, h: Polynomial, l_prime: int,
             table: Optional[MomentTable] = None) -> np.ndarray:
    """``Y = int h(y) [y]_{l'} [y]_{l'}^T dnu``.

    Sample-backed measures use the direct average ``(1/N) sum_t h(u_t)[u_t][u_t]^T``.
    """
    if l_prime < 0:
        raise OrderTooSmallError(f"negative y-order {l_prime}")
    m = spec.ny
    if not h.is_y_only():
        raise ValueError("expected a y-only polynomial")
    if spec.kind == "samples":
        U = spec.points
        V = monomial_vector(U, l_prime)
        hv = h.eval_batch(np.zeros((U.shape[0], h.nx)), U)
        Y = (V * hv[:, None]).T @ V / U.shape[0]
        return 0.5 * (Y + Y.T)
    b = basis(m, l_prime)
    tab = _table_for(spec, 2 * l_prime + h.deg_y, table)
    Y = np.zeros((len(b), len(b)))
    pair = b.exponents[:, None, :] + b.exponents[None, :, :]
    for (_, ay), c in h.items():
        Y += c * tab.lookup(pair + np.array(ay, dtype=np.int64))
    return 0.5 * (Y + Y.T)


@dataclass(frozen=True, eq=False)
class QuantifiedLocalizer:
    """``L_{nu,g}^{(k,l)}[w] = sum_i Y_i (x) L_i`` and its ingredients."""

    g: Polynomial
    k: int
    l: int
    k_prime: int
    l_prime: int
    blocks: List[Tuple[np.ndarray, np.ndarray]] = field(repr=False)
    assembled: np.ndarray = field(repr=False)

    @property
    def side(self) -> int:
        return self.assembled.shape[0]


def _decompose(g: Polynomial, spec: MeasureSpec, l_prime: int, table):
    pairs = separable_decomposition(g)
    Ys = [y_matrix(spec, h, l_prime, table) for _, h in pairs]
    return pairs, Ys


def quantified_localizing_matrix(w: TruncatedSequence, g: Polynomial, spec: MeasureSpec,
                                 k: int, l: int,
                                 table: Optional[MomentTable] = None) -> QuantifiedLocalizer:
    """Assemble ``sum_i Y_{nu,h_i}^{(l')} (x) L_{g_i}^{(k')}[w]``.

    ``p^T L p = R_w(int p(x,y)^2 g(x,y) dnu)`` when ``p`` is expanded in the
    basis ``[y]_{l'} (x) [x]_{k'}``.
    """
    kp, lp = degree_offsets(g, k, l)
    if kp < 0 or lp < 0:
        raise OrderTooSmallError(f"g of degrees ({g.deg_x}, {g.deg_y}) needs larger orders "
                                 f"than (k, l) = ({k}, {l})")
    if 2 * k > w.degree:
        raise OrderTooSmallError(f"order {k} needs degree {2 * k}, sequence has {w.degree}")
    pairs, Ys = _decompose(g, spec, lp, table)
    blocks = []
    for (gi, _), Y in zip(pairs, Ys):
        blocks.append((Y, localizing_matrix_at(w, gi, kp)))
    Sx, Sy = n_monomials(w.n, kp), n_monomials(spec.ny, lp)
    M = np.zeros((Sx * Sy, Sx * Sy))
    for Y, L in blocks:
        M += np.kron(Y, L)
    return QuantifiedLocalizer(g, k, l, kp, lp, blocks, 0.5 * (M + M.T))


def localizing_matrix_at(w: TruncatedSequence, c: Polynomial, k_prime: int) -> np.ndarray:
    """``L_c^(k')[w]`` for an explicitly given ``k'``."""
    coef = localizing_coefficients(c, k_prime, w.n, w.degree)
    return _apply(coef, w, n_monomials(w.n, k_prime))


def kron_coefficients(Y: np.ndarray, L: sp.spmatrix, Sx: int) -> sp.coo_matrix:
    """Sparse map of ``Y (x) L[w]`` given the map ``L`` of an ``Sx x Sx`` block."""
    Sy = Y.shape[0]
    L = L.tocoo()
    ya, yb = np.nonzero(Y)
    if ya.size == 0 or L.nnz == 0:
        return sp.coo_matrix((Sx * Sx * Sy * Sy, L.shape[1]))
    a, b = np.divmod(L.row, Sx)
    S = Sy * Sx
    rows = ((ya[:, None] * Sx + a[None, :]) * S + (yb[:, None] * Sx + b[None, :])).ravel()
    cols = np.broadcast_to(L.col[None, :], (ya.size, L.nnz)).ravel()
    vals = (Y[ya, yb][:, None] * L.data[None, :]).ravel()
    return sp.coo_matrix((vals, (rows, cols)), shape=(S * S, L.shape[1]))


def quantified_localizing_coefficients(g: Polynomial, spec: MeasureSpec, k: int, l: int,
                                       n: int, degree: int,
                                       table: Optional[MomentTable] = None):
    """Sparse map ``w -> vec(L_{nu,g}^{(k,l)}[w])``.

    Returns ``(coef, side, k', l', Ys)`` where ``Ys`` are the Y-matrices of the
    Kronecker summands.
    """
    kp, lp = degree_offsets(g, k, l)
    if kp < 0 or lp < 0:
        raise OrderTooSmallError(f"g of degrees ({g.deg_x}, {g.deg_y}) needs larger orders "
                                 f"than (k, l) = ({k}, {l})")
    pairs, Ys = _decompose(g, spec, lp, table)
    Sx, Sy = n_monomials(n, kp), n_monomials(spec.ny, lp)
    total = None
    for (gi, _), Y in zip(pairs, Ys):
        part = kron_coefficients(Y, localizing_coefficients(gi, kp, n, degree), Sx).tocsc()
        total = part if total is None else total + part
    if total is None:
        total = sp.csc_matrix(((Sx * Sy) ** 2, n_monomials(n, degree)))
    return total.tocsc(), Sx * Sy, kp, lp, Ys
