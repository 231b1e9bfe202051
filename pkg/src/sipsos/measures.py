"""Moments ``int y^alpha dnu(y)`` of the quantifier measure.

Closed forms are provided for the uniform (normalised Lebesgue) measure on a
box, the standard simplex and the cross-polytope, for finite discrete
measures and for the factorial measure ``nu({k}) = 1/(e k!)`` on the positive
integers, whose moments are Bell numbers.  Anything else goes through sample
averages, gated by :func:`span_dimension_check`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .polyring import basis, monomial_vector, n_monomials

__all__ = [
    "BELL",
    "CapabilityError",
    "MeasureSpec",
    "MomentTable",
    "moment",
    "moment_table",
    "sample_moment_table",
    "span_dimension_check",
    "rejection_sample",
]


class CapabilityError(ValueError):
    """Raised when a measure cannot supply moments of the requested degree."""


def _bell_numbers(count: int) -> Tuple[int, ...]:
    # Bell triangle; exact integers
    bells = [1]
    row = [1]
    for _ in range(count - 1):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
        bells.append(row[0])
    return tuple(bells)


#: Bell numbers ``B_0 .. B_30``.
BELL = _bell_numbers(31)
MAX_BELL_DEGREE = len(BELL) - 1

_KINDS = ("box", "simplex", "cross", "discrete", "samples", "product", "factorial")


@dataclass(frozen=True, eq=False)
class MeasureSpec:
    """Description of a measure ``nu`` on the quantifier set.

    Use the classmethod constructors rather than filling fields by hand.
    """

    kind: str
    ny: int
    bounds: Tuple[Tuple[float, float], ...] = ()
    points: Optional[np.ndarray] = field(default=None, repr=False)
    weights: Optional[np.ndarray] = field(default=None, repr=False)
    factors: Tuple["MeasureSpec", ...] = ()
    normalized: bool = True

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.kind in ("discrete", "samples"):
            pts = self.points
            if pts is None or pts.ndim != 2 or pts.shape[0] == 0:
                raise ValueError(f"{self.kind} measure needs a non-empty point list")
            if pts.shape[1] != self.ny:
                raise ValueError(f"points have arity {pts.shape[1]}, expected {self.ny}")

    # constructors -----------------------------------------------------------
    @classmethod
    def box(cls, bounds: Sequence[Tuple[float, float]]) -> "MeasureSpec":
        bounds = tuple((float(a), float(b)) for a, b in bounds)
        if any(b <= a for a, b in bounds):
            raise ValueError("box bounds must satisfy lower < upper")
        return cls("box", len(bounds), bounds=bounds)

    @classmethod
    def simplex(cls, m: int) -> "MeasureSpec":
        """Uniform probability on ``{y >= 0, y1 + ... + ym <= 1}``."""
        return cls("simplex", int(m))

    @classmethod
    def cross_polytope(cls, m: int) -> "MeasureSpec":
        """Uniform probability on ``{|y1| + ... + |ym| <= 1}``."""
        return cls("cross", int(m))

    @classmethod
    def discrete(cls, points, weights=None) -> "MeasureSpec":
        pts = np.array(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.ones(pts.shape[0]) if weights is None else np.asarray(weights, float)
        if w.shape != (pts.shape[0],) or (w <= 0).any():
            raise ValueError("discrete weights must be positive, one per point")
        pts.setflags(write=False)
        w = w / w.sum()
        w.setflags(write=False)
        return cls("discrete", pts.shape[1], points=pts, weights=w)

    @classmethod
    def samples(cls, points) -> "MeasureSpec":
        """Empirical measure ``(1/N) sum_t delta_{u_t}``."""
        pts = np.array(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        pts.setflags(write=False)
        return cls("samples", pts.shape[1], points=pts)

    @classmethod
    def product(cls, factors: Sequence["MeasureSpec"]) -> "MeasureSpec":
        factors = tuple(factors)
        if not factors:
            raise ValueError("product needs at least one factor")
        return cls("product", sum(f.ny for f in factors), factors=factors)

    @classmethod
    def factorial(cls, normalized: bool = True) -> "MeasureSpec":
        """``nu({k}) = 1/(e k!)`` on ``{1, 2, ...}``; raw mass is ``1 - 1/e``."""
        return cls("factorial", 1, normalized=normalized)

    # queries ------------------------------------------------------------------
    @property
    def max_degree(self) -> Optional[int]:
        """Largest supported moment degree (``None`` means unlimited)."""
        if self.kind == "factorial":
            return MAX_BELL_DEGREE
        if self.kind == "product":
            caps = [f.max_degree for f in self.factors if f.max_degree is not None]
            return min(caps) if caps else None
        return None

    @property
    def mass(self) -> float:
        if self.kind == "factorial" and not self.normalized:
            return 1.0 - math.exp(-1.0)
        return 1.0

    def truncated_atoms(self, kmax: int = 60) -> Tuple[np.ndarray, np.ndarray]:
        """Atoms and weights of the factorial measure up to ``k <= kmax``."""
        if self.kind != "factorial":
            raise ValueError("only the factorial measure has an infinite atom list")
        k = np.arange(1, kmax + 1, dtype=float)
        w = np.array([math.exp(-1.0 - math.lgamma(v + 1.0)) for v in k])
        if self.normalized:
            w = w / (1.0 - math.exp(-1.0))
        return k[:, None], w


@dataclass(frozen=True, eq=False)
class MomentTable:
    """Moments up to ``max_degree`` aligned with the graded-lex basis of ``[y]``."""

    ny: int
    max_degree: int
    values: np.ndarray = field(repr=False)

    def __getitem__(self, alpha) -> float:
        alpha = np.asarray(alpha, dtype=np.int64)
        return float(self.values[basis(self.ny, self.max_degree).index(alpha)])

    def lookup(self, exps: np.ndarray) -> np.ndarray:
        """Vectorised lookup for an integer exponent array of shape ``(..., ny)``."""
        return self.values[basis(self.ny, self.max_degree).index(exps)]


def _simplex_moment(alpha: Sequence[int], m: int) -> float:
    num = math.factorial(m)
    for a in alpha:
        num *= math.factorial(a)
    return num / math.factorial(sum(alpha) + m)


def _box_moment_1d(a: int, lo: float, hi: float) -> float:
    return (hi ** (a + 1) - lo ** (a + 1)) / ((a + 1) * (hi - lo))


def moment(spec: MeasureSpec, alpha: Sequence[int]) -> float:
    """``int y^alpha dnu`` for the given measure."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != spec.ny:
        raise ValueError(f"exponent arity {len(alpha)} does not match ny={spec.ny}")
    deg = sum(alpha)
    cap = spec.max_degree
    if cap is not None and deg > cap:
        raise CapabilityError(f"{spec.kind} measure supports moments up to degree {cap}, got {deg}")
    kind = spec.kind
    if kind == "box":
        out = 1.0
        for a, (lo, hi) in zip(alpha, spec.bounds):
            out *= _box_moment_1d(a, lo, hi)
        return out
    if kind == "simplex":
        return _simplex_moment(alpha, spec.ny)
    if kind == "cross":
        if any(a % 2 for a in alpha):
            return 0.0
        return _simplex_moment(alpha, spec.ny)
    if kind in ("discrete", "samples"):
        pts = spec.points
        vals = np.prod(pts ** np.array(alpha), axis=1)
        if kind == "discrete":
            return float(vals @ spec.weights)
        return float(vals.mean())
    if kind == "product":
        out, start = 1.0, 0
        for f in spec.factors:
            out *= moment(f, alpha[start:start + f.ny])
            start += f.ny
        return out
    if kind == "factorial":
        j = alpha[0]
        raw = (1.0 - math.exp(-1.0)) if j == 0 else float(BELL[j])
        return raw / (1.0 - math.exp(-1.0)) if spec.normalized else raw
    raise AssertionError(kind)


def moment_table(spec: MeasureSpec, degree: int) -> MomentTable:
    """All moments of total degree ``<= degree``."""
    cap = spec.max_degree
    if cap is not None and degree > cap:
        raise CapabilityError(
            f"{spec.kind} measure supports moments up to degree {cap}, got {degree}")
    if spec.kind == "samples":
        return sample_moment_table(spec.points, degree)
    if spec.kind == "discrete":
        vals = spec.weights @ monomial_vector(spec.points, degree)
        return MomentTable(spec.ny, degree, vals)
    b = basis(spec.ny, degree)
    vals = np.array([moment(spec, e) for e in b.tuples])
    return MomentTable(spec.ny, degree, vals)


def sample_moment_table(points, degree: int) -> MomentTable:
    """Sample-average moment vector ``(1/N) sum_i [u_i]_degree``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] == 0:
        raise ValueError("empty point list")
    vals = monomial_vector(pts, degree).mean(axis=0)
    vals[0] = 1.0
    return MomentTable(pts.shape[1], degree, vals)


def span_dimension_check(points, d: int, reference_dim: Optional[int] = None,
                         tol: float = 1e-9) -> Tuple[bool, int]:
    """Numerical ``dim span{[u_1]_d, ..., [u_D]_d}`` compared with ``reference_dim``.

    ``reference_dim`` defaults to ``C(m+d, d)`` (full-dimensional quantifier
    set).  Singular values below ``tol * sigma_max`` count as zero.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if reference_dim is None:
        reference_dim = n_monomials(pts.shape[1], d)
    if pts.shape[0] == 0:
        return False, 0
    lifted = monomial_vector(pts, d)
    # column scaling keeps high-degree monomials from swamping the spectrum
    scale = np.abs(lifted).max(axis=0)
    scale[scale == 0] = 1.0
    s = np.linalg.svd(lifted / scale, compute_uv=False)
    rank = int((s > tol * s[0]).sum()) if s.size and s[0] > 0 else 0
    return rank == reference_dim, rank


def rejection_sample(contains, lower, upper, n: int, rng: np.random.Generator,
                     batch: int = 4096, max_batches: int = 10_000) -> np.ndarray:
    """Draw ``n`` points uniformly from ``{contains}`` inside the box ``[lower, upper]``."""
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    got = []
    total = 0
    for _ in range(max_batches):
        cand = rng.uniform(lower, upper, size=(batch, lower.size))
        keep = cand[np.asarray(contains(cand), dtype=bool)]
        got.append(keep)
        total += keep.shape[0]
        if total >= n:
            break
    else:
        raise RuntimeError("rejection sampling acceptance rate too low")
    return np.concatenate(got)[:n]
