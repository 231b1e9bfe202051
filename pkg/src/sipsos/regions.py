"""Descriptors of quantifier sets ``Q``.

A descriptor knows membership, how to draw points from ``Q`` and how to search
``Q`` when minimising a constraint ``g(x, .)`` over it.  Measures live in
:mod:`sipsos.measures`; :meth:`QuantifierSet.default_measure` pairs the two.
"""
from __future__ import annotations

import ast
import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .measures import MeasureSpec, rejection_sample, span_dimension_check

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# numeric expressions for non-polynomial set descriptions
# ---------------------------------------------------------------------------

_FUNCS = {"exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs,
          "sin": np.sin, "cos": np.cos, "tanh": np.tanh}
_CONSTS = {"e": math.e, "pi": math.pi}
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)


class ExpressionError(ValueError):
    def __init__(self, message: str, column: int):
        super().__init__(f"column {column}: {message}")
        self.column = column


def compile_expression(text: str, ny: int) -> Callable[[np.ndarray], np.ndarray]:
    """Compile ``4 - 3^(y1^2) - 3^(y2^2)``-style text into ``f(Y) -> array``.

    Only arithmetic, ``^``/``**``, numeric literals, ``y1..y_ny`` (``y`` when
    ``ny == 1``), ``e``, ``pi`` and the functions exp, log, sqrt, abs, sin,
    cos, tanh are accepted.
    """
    src = text.replace("^", "**")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(exc.msg, exc.offset or 1) from None

    def check(node):
        col = getattr(node, "col_offset", 0) + 1
        if isinstance(node, ast.Expression):
            return check(node.body)
        if isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            check(node.operand)
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            pass
        elif isinstance(node, ast.Name):
            if node.id not in _CONSTS and _var_index(node.id, ny) is None:
                raise ExpressionError(f"unknown name {node.id!r}", col)
        elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords:
            check(node.args[0])
        else:
            raise ExpressionError(f"unsupported syntax {type(node).__name__}", col)

    check(tree)

    # validated trees only contain arithmetic, whitelisted names and calls
    code = compile(tree, "<expression>", "eval")
    names = {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}
    cols = {nm: _var_index(nm, ny) for nm in names if nm not in _CONSTS and nm not in _FUNCS}
    base = {"__builtins__": {}}
    base.update(_FUNCS)
    base.update(_CONSTS)

    def f(Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        env = dict(base)
        for nm, i in cols.items():
            env[nm] = Y[:, i]
        with np.errstate(all="ignore"):
            out = eval(code, env)
        return np.broadcast_to(np.asarray(out, dtype=float), (Y.shape[0],)).copy()

    f.source = text
    return f


def _var_index(name: str, ny: int) -> Optional[int]:
    if name == "y" and ny == 1:
        return 0
    if name.startswith("y") and name[1:].isdigit():
        i = int(name[1:])
        if 1 <= i <= ny:
            return i - 1
    return None


# ---------------------------------------------------------------------------
# set descriptors
# ---------------------------------------------------------------------------

class QuantifierSet:
    """Base class.  Subclasses set ``ny``, ``lower``, ``upper`` and ``kind``."""

    kind = "abstract"
    ny: int
    lower: np.ndarray
    upper: np.ndarray

    def contains(self, Y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rejection_sample(self.contains, self.lower, self.upper, n, rng)

    def search_points(self, budget: int, rng: np.random.Generator) -> np.ndarray:
        """Candidate points for minimising a function over ``Q``."""
        return self.sample(budget, rng)

    def project(self, Y: np.ndarray) -> np.ndarray:
        """Map points back onto ``Q``; rows that cannot be mapped become NaN."""
        Y = np.atleast_2d(np.array(Y, dtype=float))
        Y[~self.contains(Y)] = np.nan
        return Y

    def default_measure(self, rng: np.random.Generator, n_samples: int = 4000) -> MeasureSpec:
        return MeasureSpec.samples(self.sample(n_samples, rng))

    # local search ---------------------------------------------------------
    def _line_interval(self, y0: np.ndarray, i: int) -> Tuple[float, float]:
        lo, hi = [], []
        for sign, edge, acc in ((-1.0, self.lower[i], lo), (1.0, self.upper[i], hi)):
            far = abs(edge - y0[i])
            a, b = 0.0, far
            probe = y0.copy()
            probe[i] = y0[i] + sign * b
            if self.contains(probe[None])[0]:
                acc.append(far)
                continue
            for _ in range(40):
                mid = 0.5 * (a + b)
                probe[i] = y0[i] + sign * mid
                if self.contains(probe[None])[0]:
                    a = mid
                else:
                    b = mid
            acc.append(a)
        return -lo[0], hi[0]

    def refine(self, fun: Callable[[np.ndarray], np.ndarray], y0: np.ndarray,
               sweeps: int = 3, iters: int = 40) -> Tuple[np.ndarray, float]:
        """Coordinatewise golden-section descent from ``y0`` staying inside ``Q``."""
        y = np.array(y0, dtype=float)
        best = float(fun(y[None])[0])
        for _ in range(sweeps):
            for i in range(self.ny):
                a, b = self._line_interval(y, i)
                if b - a <= 1e-14:
                    continue

                def phi(t):
                    z = y.copy()
                    z[i] += t
                    z = self.project(z[None])[0]
                    if np.isnan(z).any():
                        return np.inf, z
                    return float(fun(z[None])[0]), z

                t, val, z = _golden(phi, a, b, iters)
                if val < best:
                    best, y = val, z
        return self._pattern_search(fun, y, best)

    def _pattern_search(self, fun, y, best, batch: int = 64, rounds: int = 120):
        # random local moves slide along curved boundaries where axis moves stall
        rng = np.random.default_rng(0)
        radius = 0.05 * float(np.max(self.upper - self.lower))
        for _ in range(rounds):
            cand = y + radius * rng.standard_normal((batch, self.ny))
            cand = cand[self.contains(cand)]
            if cand.shape[0]:
                vals = fun(cand)
                i = int(np.argmin(vals))
                if vals[i] < best:
                    best, y = float(vals[i]), cand[i]
                    continue
            radius *= 0.7
            if radius < 1e-12:
                break
        return y, best

    def describe(self) -> dict:
        raise NotImplementedError


def _golden(phi, a: float, b: float, iters: int):
    a0, b0 = a, b
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, zc = phi(c)
    fd, zd = phi(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd, zd = d, c, fc, zc
            c = b - GOLDEN * (b - a)
            fc, zc = phi(c)
        else:
            a, c, fc, zc = c, d, fd, zd
            d = a + GOLDEN * (b - a)
            fd, zd = phi(d)
    # minima on the original interval ends are common
    fa, za = phi(a0)
    fb, zb = phi(b0)
    best = min([(fc, c, zc), (fd, d, zd), (fa, a0, za), (fb, b0, zb)], key=lambda t: t[0])
    return best[1], best[0], best[2]


def _grid(lower: np.ndarray, upper: np.ndarray, budget: int) -> np.ndarray:
    m = lower.size
    r = max(2, int(math.floor(budget ** (1.0 / m))))
    axes = [np.linspace(lo, hi, r) for lo, hi in zip(lower, upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


class Box(QuantifierSet):
    kind = "box"

    def __init__(self, bounds: Sequence[Tuple[float, float]]):
        self.bounds = tuple((float(a), float(b)) for a, b in bounds)
        self.ny = len(self.bounds)
        self.lower = np.array([a for a, _ in self.bounds])
        self.upper = np.array([b for _, b in self.bounds])

    def contains(self, Y):
        Y = np.atleast_2d(Y)
        return np.all((Y >= self.lower - 1e-12) & (Y <= self.upper + 1e-12), axis=1)

    def sample(self, n, rng):
        return rng.uniform(self.lower, self.upper, size=(n, self.ny))

    def search_points(self, budget, rng):
        return _grid(self.lower, self.upper, budget)

    def default_measure(self, rng=None, n_samples=0):
        return MeasureSpec.box(self.bounds)

    def describe(self):
        return {"kind": "box", "bounds": [list(b) for b in self.bounds]}


class Simplex(QuantifierSet):
    """``{y >= 0, sum(y) <= 1}``."""

    kind = "simplex"

    def __init__(self, m: int):
        self.ny = int(m)
        self.lower = np.zeros(self.ny)
        self.upper = np.ones(self.ny)

    def contains(self, Y):
        Y = np.atleast_2d(Y)
        return np.all(Y >= -1e-12, axis=1) & (Y.sum(axis=1) <= 1 + 1e-12)

    def sample(self, n, rng):
        return rng.dirichlet(np.ones(self.ny + 1), size=n)[:, :self.ny]

    def search_points(self, budget, rng):
        g = _grid(self.lower, self.upper, budget * math.factorial(self.ny))
        return g[self.contains(g)]

    def default_measure(self, rng=None, n_samples=0):
        return MeasureSpec.simplex(self.ny)

    def describe(self):
        return {"kind": "simplex", "dim": self.ny}


class CrossPolytope(QuantifierSet):
    """``{|y1| + ... + |ym| <= 1}``."""

    kind = "cross"

    def __init__(self, m: int):
        self.ny = int(m)
        self.lower = -np.ones(self.ny)
        self.upper = np.ones(self.ny)

    def contains(self, Y):
        Y = np.atleast_2d(Y)
        return np.abs(Y).sum(axis=1) <= 1 + 1e-12

    def sample(self, n, rng):
        base = rng.dirichlet(np.ones(self.ny + 1), size=n)[:, :self.ny]
        return base * rng.choice([-1.0, 1.0], size=base.shape)

    def search_points(self, budget, rng):
        g = _grid(self.lower, self.upper, budget * 2)
        return g[self.contains(g)]

    def default_measure(self, rng=None, n_samples=0):
        return MeasureSpec.cross_polytope(self.ny)

    def describe(self):
        return {"kind": "cross", "dim": self.ny}


class DiscreteSet(QuantifierSet):
    """A finite point set (also used for truncations of countable sets)."""

    kind = "points"

    def __init__(self, points, weights=None):
        pts = np.array(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] == 0:
            raise ValueError("empty point set")
        self.points = pts
        self.weights = weights
        self.ny = pts.shape[1]
        self.lower = pts.min(axis=0)
        self.upper = pts.max(axis=0)

    def contains(self, Y):
        Y = np.atleast_2d(Y)
        d = np.abs(Y[:, None, :] - self.points[None, :, :]).max(axis=2)
        return d.min(axis=1) <= 1e-12

    def sample(self, n, rng):
        idx = rng.integers(0, self.points.shape[0], size=n)
        return self.points[idx]

    def search_points(self, budget, rng):
        return self.points

    def refine(self, fun, y0, sweeps=3, iters=40):
        return np.array(y0, float), float(fun(np.atleast_2d(y0))[0])

    def default_measure(self, rng=None, n_samples=0):
        return MeasureSpec.discrete(self.points, self.weights)

    def describe(self):
        return {"kind": "points", "points": self.points.tolist()}


class PositiveIntegers(DiscreteSet):
    """``{1, 2, ...}`` truncated at ``kmax`` for searching."""

    kind = "integers"

    def __init__(self, kmax: int = 60):
        super().__init__(np.arange(1, kmax + 1, dtype=float)[:, None])
        self.kmax = kmax

    def contains(self, Y):
        Y = np.atleast_2d(Y)[:, 0]
        return (Y >= 1) & (np.abs(Y - np.round(Y)) <= 1e-12)

    def default_measure(self, rng=None, n_samples=0):
        return MeasureSpec.factorial(normalized=True)

    def describe(self):
        return {"kind": "integers", "kmax": self.kmax}


class ImplicitSet(QuantifierSet):
    """``{y in box : c_i(y) >= 0 for all i}`` with arbitrary vectorised ``c_i``."""

    kind = "implicit"

    def __init__(self, constraints: Sequence, lower, upper, ny: Optional[int] = None):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.ny = self.lower.size if ny is None else ny
        self.sources = [c if isinstance(c, str) else getattr(c, "source", None) for c in constraints]
        self.constraints = [compile_expression(c, self.ny) if isinstance(c, str) else c
                            for c in constraints]

    def contains(self, Y):
        Y = np.atleast_2d(np.asarray(Y, float))
        ok = np.all((Y >= self.lower - 1e-12) & (Y <= self.upper + 1e-12), axis=1)
        for c in self.constraints:
            ok &= c(Y) >= 0
        return ok

    def search_points(self, budget, rng):
        g = _grid(self.lower, self.upper, budget * 4)
        pts = g[self.contains(g)]
        if pts.shape[0] < budget // 4:
            pts = np.vstack([pts, self.sample(budget // 2, rng)])
        return pts

    def describe(self):
        return {"kind": "implicit", "constraints": list(self.sources),
                "lower": self.lower.tolist(), "upper": self.upper.tolist()}


class LevelSet(QuantifierSet):
    """``{y : phi(y) = level}`` for ``phi`` increasing along rays from the origin.

    Points are produced radially: a direction is drawn on the unit sphere
    (restricted to the non-negative orthant when ``nonnegative``) and scaled by
    bisection until ``phi`` hits ``level``.
    """

    kind = "level_set"

    def __init__(self, phi, level: float, ny: int, nonnegative: bool = False,
                 rmax: float = 1e3):
        self.ny = int(ny)
        self.source = phi if isinstance(phi, str) else getattr(phi, "source", None)
        self.phi = compile_expression(phi, self.ny) if isinstance(phi, str) else phi
        self.level = float(level)
        self.nonnegative = nonnegative
        self.rmax = rmax
        # enclosing box from a cheap radial probe
        dirs = np.vstack([np.eye(self.ny), -np.eye(self.ny)]) if not nonnegative else np.eye(self.ny)
        pts = self._radial(dirs)
        r = np.nanmax(np.abs(pts)) * 1.5 + 1e-9 if np.isfinite(pts).any() else 1.0
        self.lower = np.zeros(self.ny) if nonnegative else -np.full(self.ny, r)
        self.upper = np.full(self.ny, r)

    def _radial(self, dirs: np.ndarray) -> np.ndarray:
        dirs = np.atleast_2d(dirs)
        a = np.zeros(dirs.shape[0])
        b = np.full(dirs.shape[0], 1.0)
        for _ in range(60):
            grow = self.phi(dirs * b[:, None]) < self.level
            if not grow.any() or (b >= self.rmax).all():
                break
            b = np.where(grow, b * 2.0, b)
        for _ in range(80):
            mid = 0.5 * (a + b)
            below = self.phi(dirs * mid[:, None]) < self.level
            a = np.where(below, mid, a)
            b = np.where(below, b, mid)
            if (b - a).max() <= 1e-15 * b.max():
                break
        r = 0.5 * (a + b)
        out = dirs * r[:, None]
        bad = np.abs(self.phi(out) - self.level) > 1e-8 * max(1.0, abs(self.level))
        out[bad] = np.nan
        return out

    def contains(self, Y):
        Y = np.atleast_2d(np.asarray(Y, float))
        ok = np.abs(self.phi(Y) - self.level) <= 1e-8 * max(1.0, abs(self.level))
        if self.nonnegative:
            ok &= np.all(Y >= -1e-12, axis=1)
        return ok

    def sample(self, n, rng):
        dirs = rng.standard_normal((n, self.ny))
        if self.nonnegative:
            dirs = np.abs(dirs)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        out = self._radial(dirs)
        return out[~np.isnan(out).any(axis=1)]

    def project(self, Y):
        Y = np.atleast_2d(np.array(Y, dtype=float))
        if self.nonnegative:
            Y = np.maximum(Y, 0.0)
        norms = np.linalg.norm(Y, axis=1, keepdims=True)
        out = np.full_like(Y, np.nan)
        ok = norms[:, 0] > 0
        out[ok] = self._radial(Y[ok] / norms[ok])
        return out

    def refine(self, fun, y0, sweeps=3, iters=40, batch=64):
        """Batched local search over directions; one radial projection per round."""
        rng = np.random.default_rng(0)
        y = np.array(y0, dtype=float)
        best = float(fun(y[None])[0])
        d = y / np.linalg.norm(y)
        radius = 0.25
        for _ in range(sweeps * iters):
            cand = d + radius * rng.standard_normal((batch, self.ny))
            if self.nonnegative:
                cand = np.abs(cand)
            cand /= np.linalg.norm(cand, axis=1, keepdims=True)
            pts = self._radial(cand)
            ok = ~np.isnan(pts).any(axis=1)
            if ok.any():
                vals = fun(pts[ok])
                i = int(np.argmin(vals))
                if vals[i] < best:
                    best, y = float(vals[i]), pts[ok][i]
                    d = cand[ok][i]
                    continue
            radius *= 0.5
            if radius < 1e-10:
                break
        return y, best

    def describe(self):
        return {"kind": "level_set", "phi": self.source, "level": self.level,
                "nonnegative": self.nonnegative}


class UnionSet(QuantifierSet):
    kind = "union"

    def __init__(self, pieces: Sequence[QuantifierSet]):
        self.pieces = list(pieces)
        if not self.pieces:
            raise ValueError("empty union")
        self.ny = self.pieces[0].ny
        self.lower = np.min([p.lower for p in self.pieces], axis=0)
        self.upper = np.max([p.upper for p in self.pieces], axis=0)

    def contains(self, Y):
        out = np.zeros(np.atleast_2d(Y).shape[0], dtype=bool)
        for p in self.pieces:
            out |= p.contains(Y)
        return out

    def sample(self, n, rng):
        per = -(-n // len(self.pieces))
        return np.vstack([p.sample(per, rng) for p in self.pieces])[:n]

    def search_points(self, budget, rng):
        per = max(1, budget // len(self.pieces))
        return np.vstack([p.search_points(per, rng) for p in self.pieces])

    def refine(self, fun, y0, sweeps=3, iters=40):
        best_y, best = np.array(y0, float), float(fun(np.atleast_2d(y0))[0])
        for p in self.pieces:
            if p.contains(np.atleast_2d(y0))[0]:
                y, v = p.refine(fun, y0, sweeps, iters)
                if v < best:
                    best_y, best = y, v
        return best_y, best

    def describe(self):
        return {"kind": "union", "pieces": [p.describe() for p in self.pieces]}


def gated_samples(region: QuantifierSet, n: int, degree: int, rng: np.random.Generator,
                  reference_dim: Optional[int] = None) -> np.ndarray:
    """Draw ``n`` samples and enforce the span-dimension gate at ``degree``.

    Raises ``ValueError`` when the lifted samples do not reach the reference
    dimension, since the resulting moments would not correspond to a measure
    whose support is all of ``Q``.
    """
    pts = region.sample(n, rng)
    ok, achieved = span_dimension_check(pts, degree, reference_dim)
    if not ok:
        raise ValueError(
            f"sample span gate failed at degree {degree}: dimension {achieved}"
            + (f" < {reference_dim}" if reference_dim is not None else ""))
    return pts


def region_from_description(desc: dict, ny: int) -> QuantifierSet:
    """Inverse of :meth:`QuantifierSet.describe`."""
    kind = desc["kind"]
    if kind == "box":
        return Box(desc["bounds"])
    if kind == "simplex":
        return Simplex(desc.get("dim", ny))
    if kind == "cross":
        return CrossPolytope(desc.get("dim", ny))
    if kind == "points":
        return DiscreteSet(desc["points"])
    if kind == "integers":
        return PositiveIntegers(desc.get("kmax", 60))
    if kind == "implicit":
        return ImplicitSet(desc["constraints"], desc["lower"], desc["upper"], ny)
    if kind == "level_set":
        return LevelSet(desc["phi"], desc.get("level", 1.0), ny, desc.get("nonnegative", False))
    if kind == "union":
        return UnionSet([region_from_description(p, ny) for p in desc["pieces"]])
    raise ValueError(f"unknown set kind {kind!r}")
