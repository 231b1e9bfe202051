"""Sparse polynomials in two variable blocks ``x`` (size ``nx``) and ``y`` (size ``ny``).

Monomials are ordered graded-lexicographically with ``x1 > x2 > ... > xn``, so
``[x]_2`` for two variables reads ``1, x1, x2, x1^2, x1*x2, x2^2``.  Coefficients
are doubles; terms whose magnitude falls below :data:`DROP_TOL` after an
arithmetic operation are discarded.
"""
from __future__ import annotations

import math
import re
from functools import lru_cache
from numbers import Real
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

DROP_TOL = 1e-14

Exponent = Tuple[int, ...]
Term = Tuple[Exponent, Exponent]


# ---------------------------------------------------------------------------
# monomial indexing
# ---------------------------------------------------------------------------

def _n_exact(e: int, k: int) -> int:
    """Number of monomials of degree exactly ``e`` in ``k`` variables."""
    if k == 0:
        return 1 if e == 0 else 0
    return math.comb(e + k - 1, k - 1)


def n_monomials(n: int, d: int) -> int:
    """``C(n+d, d)``, the length of ``[x]_d``."""
    if d < 0:
        return 0
    return math.comb(n + d, d)


def mono_index(alpha: Sequence[int], arity: int) -> int:
    """Position of ``x^alpha`` in the graded-lex monomial vector.

    The index does not depend on the truncation degree, so it is valid in
    ``[x]_d`` for every ``d >= |alpha|``.

    >>> mono_index((1, 1), 2)
    4
    """
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != arity:
        raise ValueError(f"exponent {alpha} has arity {len(alpha)}, expected {arity}")
    if any(a < 0 for a in alpha):
        raise ValueError(f"negative exponent in {alpha}")
    d = sum(alpha)
    idx = math.comb(arity + d - 1, arity) if d > 0 else 0
    rem = d
    for i, a in enumerate(alpha):
        k = arity - i - 1
        for v in range(a + 1, rem + 1):
            idx += _n_exact(rem - v, k)
        rem -= a
    return idx


def _compositions(d: int, n: int) -> Iterator[Exponent]:
    # lex-descending exponent vectors of total degree exactly d
    if n == 0:
        if d == 0:
            yield ()
        return
    if n == 1:
        yield (d,)
        return
    for first in range(d, -1, -1):
        for rest in _compositions(d - first, n - 1):
            yield (first,) + rest


def monomials(n: int, d: int) -> List[Exponent]:
    """All exponent vectors of ``N^n_d`` in graded-lex order."""
    return list(_basis(n, d).tuples)


class MonomialBasis:
    """The exponent table of ``[x]_d`` plus a vectorised exponent -> index map."""

    def __init__(self, n: int, d: int):
        if n < 0 or d < 0:
            raise ValueError("arity and degree must be non-negative")
        self.n = n
        self.d = d
        self.tuples: Tuple[Exponent, ...] = tuple(
            e for deg in range(d + 1) for e in _compositions(deg, n)
        )
        self.exponents = np.array(self.tuples, dtype=np.int64).reshape(len(self.tuples), n)
        self._base = d + 1
        self._weights = self._base ** np.arange(n - 1, -1, -1, dtype=np.int64)
        keys = self.exponents @ self._weights
        self._order = np.argsort(keys)
        self._sorted_keys = keys[self._order]

    def __len__(self) -> int:
        return len(self.tuples)

    def index(self, exps: np.ndarray) -> np.ndarray:
        """Map an integer array of shape ``(..., n)`` to positions in the basis."""
        exps = np.asarray(exps, dtype=np.int64)
        if exps.shape[-1] != self.n:
            raise ValueError("exponent arity mismatch")
        if self.n == 0:
            return np.zeros(exps.shape[:-1], dtype=np.int64)
        if (exps < 0).any() or (exps.sum(axis=-1) > self.d).any():
            raise ValueError(f"exponent outside N^{self.n}_{self.d}")
        keys = exps @ self._weights
        pos = np.searchsorted(self._sorted_keys, keys)
        return self._order[pos]


@lru_cache(maxsize=256)
def _basis(n: int, d: int) -> MonomialBasis:
    return MonomialBasis(n, d)


def basis(n: int, d: int) -> MonomialBasis:
    """Cached :class:`MonomialBasis` for ``N^n_d``."""
    return _basis(int(n), int(d))


def monomial_vector(points: np.ndarray, d: int) -> np.ndarray:
    """Evaluate ``[u]_d`` at each row of ``points``; returns shape ``(N, C(n+d,d))``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    b = basis(points.shape[1], d)
    out = np.ones((points.shape[0], len(b)))
    for j in range(points.shape[1]):
        out *= points[:, [j]] ** b.exponents[:, j][None, :]
    return out


# ---------------------------------------------------------------------------
# polynomials
# ---------------------------------------------------------------------------

class Polynomial:
    """Real polynomial in ``x = (x1..x_nx)`` and ``y = (y1..y_ny)``.

    ``terms`` maps ``(x_exponent, y_exponent)`` pairs to coefficients.  Instances
    are treated as immutable.
    """

    __slots__ = ("nx", "ny", "_terms")

    def __init__(self, nx: int, ny: int = 0, terms: Dict[Term, float] | None = None):
        self.nx = int(nx)
        self.ny = int(ny)
        clean: Dict[Term, float] = {}
        for (ax, ay), c in (terms or {}).items():
            ax, ay = tuple(int(v) for v in ax), tuple(int(v) for v in ay)
            if len(ax) != self.nx or len(ay) != self.ny:
                raise ValueError(f"term {(ax, ay)} does not match arities ({nx}, {ny})")
            if any(v < 0 for v in ax + ay):
                raise ValueError(f"negative exponent in {(ax, ay)}")
            c = float(c)
            if abs(c) >= DROP_TOL:
                clean[(ax, ay)] = clean.get((ax, ay), 0.0) + c
        self._terms = {t: c for t, c in clean.items() if abs(c) >= DROP_TOL}

    # constructors -----------------------------------------------------------
    @classmethod
    def constant(cls, c: float, nx: int, ny: int = 0) -> "Polynomial":
        return cls(nx, ny, {((0,) * nx, (0,) * ny): c})

    @classmethod
    def x(cls, i: int, nx: int, ny: int = 0) -> "Polynomial":
        """The coordinate ``x_i`` (1-based)."""
        if not 1 <= i <= nx:
            raise ValueError(f"x{i} out of range for nx={nx}")
        e = [0] * nx
        e[i - 1] = 1
        return cls(nx, ny, {(tuple(e), (0,) * ny): 1.0})

    @classmethod
    def y(cls, i: int, nx: int, ny: int) -> "Polynomial":
        """The coordinate ``y_i`` (1-based)."""
        if not 1 <= i <= ny:
            raise ValueError(f"y{i} out of range for ny={ny}")
        e = [0] * ny
        e[i - 1] = 1
        return cls(nx, ny, {((0,) * nx, tuple(e)): 1.0})

    # basic queries ------------------------------------------------------------
    @property
    def terms(self) -> Dict[Term, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    @property
    def deg_x(self) -> int:
        return max((sum(ax) for ax, _ in self._terms), default=0)

    @property
    def deg_y(self) -> int:
        return max((sum(ay) for _, ay in self._terms), default=0)

    @property
    def degree(self) -> int:
        return max((sum(ax) + sum(ay) for ax, ay in self._terms), default=0)

    def is_x_only(self) -> bool:
        return all(not any(ay) for _, ay in self._terms)

    def is_y_only(self) -> bool:
        return all(not any(ax) for ax, _ in self._terms)

    def coefficient(self, ax: Sequence[int], ay: Sequence[int] | None = None) -> float:
        ay = tuple(ay) if ay is not None else (0,) * self.ny
        return self._terms.get((tuple(ax), ay), 0.0)

    def x_coefficients(self, d: int | None = None) -> np.ndarray:
        """Coefficient vector aligned with ``[x]_d`` (x-only polynomials)."""
        if not self.is_x_only():
            raise ValueError("polynomial depends on y")
        d = self.deg_x if d is None else d
        b = basis(self.nx, d)
        out = np.zeros(len(b))
        for (ax, _), c in self._terms.items():
            if sum(ax) > d:
                raise ValueError(f"degree {sum(ax)} exceeds {d}")
            out[mono_index(ax, self.nx)] = c
        return out

    # arithmetic ---------------------------------------------------------------
    def _check(self, other: "Polynomial") -> None:
        if (self.nx, self.ny) != (other.nx, other.ny):
            raise ValueError(
                f"arity mismatch: ({self.nx}, {self.ny}) vs ({other.nx}, {other.ny})")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, Real):
            return Polynomial.constant(float(other), self.nx, self.ny)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for t, c in other._terms.items():
            out[t] = out.get(t, 0.0) + c
        return Polynomial(self.nx, self.ny, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nx, self.ny, {t: -c for t, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Real):
            return Polynomial(self.nx, self.ny,
                              {t: c * float(other) for t, c in self._terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: Dict[Term, float] = {}
        for (ax, ay), c in self._terms.items():
            for (bx, by), e in other._terms.items():
                t = (tuple(i + j for i, j in zip(ax, bx)), tuple(i + j for i, j in zip(ay, by)))
                out[t] = out.get(t, 0.0) + c * e
        return Polynomial(self.nx, self.ny, out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Real):
            return NotImplemented
        return self * (1.0 / float(other))

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        out = Polynomial.constant(1.0, self.nx, self.ny)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return (self.nx, self.ny) == (other.nx, other.ny) and self._terms == other._terms

    def __hash__(self):
        return hash((self.nx, self.ny, frozenset(self._terms.items())))

    def almost_equal(self, other: "Polynomial", tol: float = 1e-12) -> bool:
        diff = self - other
        return all(abs(c) <= tol for _, c in diff.items())

    def with_arity(self, nx: int, ny: int) -> "Polynomial":
        """Embed into a ring with more variables (new variables get exponent 0)."""
        if nx < self.nx or ny < self.ny:
            raise ValueError("cannot shrink arity")
        return Polynomial(nx, ny, {
            (ax + (0,) * (nx - self.nx), ay + (0,) * (ny - self.ny)): c
            for (ax, ay), c in self._terms.items()
        })

    # evaluation ---------------------------------------------------------------
    def __call__(self, x_point: Sequence[float] = (), y_point: Sequence[float] = ()) -> float:
        return poly_eval(self, x_point, y_point)

    def substitute_x(self, x_point: Sequence[float]) -> "Polynomial":
        """Fix ``x`` at a point; the result keeps the arities but is y-only."""
        x_point = np.asarray(x_point, dtype=float)
        if x_point.shape != (self.nx,):
            raise ValueError(f"x point must have {self.nx} entries")
        zero = (0,) * self.nx
        out: Dict[Term, float] = {}
        for (ax, ay), c in self._terms.items():
            v = c * float(np.prod(x_point ** np.array(ax))) if self.nx else c
            out[(zero, ay)] = out.get((zero, ay), 0.0) + v
        return Polynomial(self.nx, self.ny, out)

    def eval_batch(self, X: np.ndarray | None = None, Y: np.ndarray | None = None) -> np.ndarray:
        """Vectorised evaluation at rows of ``X`` (N, nx) and ``Y`` (N, ny).

        Either block may be omitted when the polynomial does not depend on it;
        a single point broadcasts against many rows of the other block.
        """
        X = np.zeros((1, self.nx)) if X is None else np.atleast_2d(np.asarray(X, float))
        Y = np.zeros((1, self.ny)) if Y is None else np.atleast_2d(np.asarray(Y, float))
        if X.shape[1] != self.nx or Y.shape[1] != self.ny:
            raise ValueError("point arity mismatch")
        N = max(X.shape[0], Y.shape[0])
        out = np.zeros(N)
        for (ax, ay), c in self._terms.items():
            v = np.full(N, c)
            for j, a in enumerate(ax):
                if a:
                    v = v * X[:, j] ** a
            for j, a in enumerate(ay):
                if a:
                    v = v * Y[:, j] ** a
            out += v
        return out

    # text ---------------------------------------------------------------------
    def __str__(self) -> str:
        return format_polynomial(self)

    def __repr__(self) -> str:
        return f"Polynomial(nx={self.nx}, ny={self.ny}, {format_polynomial(self)!r})"


def poly_eval(p: Polynomial, x_point: Sequence[float] = (), y_point: Sequence[float] = ()) -> float:
    """Evaluate ``p`` at a single ``(x, y)`` point."""
    x_point = tuple(float(v) for v in x_point)
    y_point = tuple(float(v) for v in y_point)
    if len(x_point) != p.nx or len(y_point) != p.ny:
        raise ValueError(
            f"point arities ({len(x_point)}, {len(y_point)}) do not match ({p.nx}, {p.ny})")
    total = 0.0
    for (ax, ay), c in p.items():
        v = c
        for xi, a in zip(x_point, ax):
            if a:
                v *= xi ** a
        for yi, a in zip(y_point, ay):
            if a:
                v *= yi ** a
        total += v
    return total


def separable_decomposition(g: Polynomial) -> List[Tuple[Polynomial, Polynomial]]:
    """Write ``g(x, y) = sum_i g_i(x) h_i(y)`` with one pair per distinct y-monomial.

    The ``h_i`` are monic y-monomials listed in graded-lex order; the ``g_i`` are
    x-only.  Both keep the arities of ``g``.
    """
    groups: Dict[Exponent, Dict[Term, float]] = {}
    zero_y = (0,) * g.ny
    zero_x = (0,) * g.nx
    for (ax, ay), c in g.items():
        groups.setdefault(ay, {})[(ax, zero_y)] = c
    if not groups:
        return []
    out = []
    for ay in sorted(groups, key=lambda e: mono_index(e, g.ny)):
        out.append((Polynomial(g.nx, g.ny, groups[ay]),
                    Polynomial(g.nx, g.ny, {(zero_x, ay): 1.0})))
    return out


def omega_r(n: int, r: int, ny: int = 0) -> Polynomial:
    """``sum_j sum_{k<=r} x_j^(2k) / k!`` -- the perturbation polynomial used for
    non-archimedean certificates."""
    if n < 1 or r < 0:
        raise ValueError("need n >= 1 and r >= 0")
    terms: Dict[Term, float] = {}
    zero_y = (0,) * ny
    for j in range(n):
        for k in range(r + 1):
            e = [0] * n
            e[j] = 2 * k
            t = (tuple(e), zero_y)
            terms[t] = terms.get(t, 0.0) + 1.0 / math.factorial(k)
    return Polynomial(n, ny, terms)


# ---------------------------------------------------------------------------
# text syntax
# ---------------------------------------------------------------------------

def _format_coef(c: float) -> str:
    r = repr(float(c))
    return r


def _format_mono(ax: Exponent, ay: Exponent) -> List[str]:
    parts = []
    for name, exps in (("x", ax), ("y", ay)):
        for i, a in enumerate(exps, start=1):
            if a == 1:
                parts.append(f"{name}{i}")
            elif a > 1:
                parts.append(f"{name}{i}^{a}")
    return parts


def format_polynomial(p: Polynomial) -> str:
    """Render in the problem-file syntax; ``parse_polynomial`` inverts it exactly."""
    if p.is_zero():
        return "0"
    items = sorted(p.items(), key=lambda kv: (sum(kv[0][0]) + sum(kv[0][1]),
                                              mono_index(kv[0][0] + kv[0][1], p.nx + p.ny)))
    chunks = []
    for i, ((ax, ay), c) in enumerate(items):
        mono = _format_mono(ax, ay)
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        if mono and mag == 1.0:
            body = "*".join(mono)
        else:
            body = "*".join([_format_coef(mag)] + mono)
        if i == 0:
            chunks.append(("-" if sign == "-" else "") + body)
        else:
            chunks.append(f" {sign} {body}")
    return "".join(chunks)


class PolynomialSyntaxError(ValueError):
    """Parse failure; ``column`` is 1-based within the parsed string."""

    def __init__(self, message: str, column: int):
        super().__init__(f"column {column}: {message}")
        self.column = column
        self.reason = message


_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<var>[xy]\d*)
  | (?P<op>\*\*|[-+*/^()])
""", re.VERBOSE)


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise PolynomialSyntaxError(f"unexpected character {text[pos]!r}", pos + 1)
        kind = m.lastgroup
        if kind != "ws":
            val = m.group(kind)
            if kind == "op" and val == "**":
                val = "^"
            out.append((kind, val, pos + 1))
        pos = m.end()
    out.append(("end", "", len(text) + 1))
    return out


class _Parser:
    def __init__(self, text: str, nx: int, ny: int):
        self.toks = _tokenize(text)
        self.i = 0
        self.nx, self.ny = nx, ny

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, val: str):
        kind, v, col = self.take()
        if v != val:
            raise PolynomialSyntaxError(f"expected {val!r}, found {v or 'end of input'!r}", col)

    def parse(self) -> Polynomial:
        p = self.expr()
        kind, v, col = self.peek()
        if kind != "end":
            raise PolynomialSyntaxError(f"unexpected {v!r}", col)
        return p

    def expr(self) -> Polynomial:
        p = self.term()
        while self.peek()[1] in ("+", "-"):
            _, op, _ = self.take()
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self) -> Polynomial:
        p = self.unary()
        while self.peek()[1] in ("*", "/"):
            _, op, col = self.take()
            q = self.unary()
            if op == "*":
                p = p * q
            else:
                if not q.is_zero() and q.degree == 0:
                    p = p / q.coefficient((0,) * self.nx, (0,) * self.ny)
                else:
                    raise PolynomialSyntaxError("division only by a nonzero constant", col)
        return p

    def unary(self) -> Polynomial:
        if self.peek()[1] == "-":
            self.take()
            return -self.unary()
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Polynomial:
        p = self.atom()
        if self.peek()[1] == "^":
            self.take()
            kind, v, col = self.take()
            if kind != "num" or not v.isdigit():
                raise PolynomialSyntaxError("exponent must be a non-negative integer", col)
            p = p ** int(v)
        return p

    def atom(self) -> Polynomial:
        kind, v, col = self.take()
        if kind == "num":
            return Polynomial.constant(float(v), self.nx, self.ny)
        if kind == "var":
            block, idx = v[0], v[1:]
            size = self.nx if block == "x" else self.ny
            if idx == "":
                if size != 1:
                    raise PolynomialSyntaxError(f"bare {block!r} needs exactly one {block}-variable", col)
                i = 1
            else:
                i = int(idx)
            if not 1 <= i <= size:
                raise PolynomialSyntaxError(f"variable {v} out of range ({block}1..{block}{size})", col)
            return Polynomial.x(i, self.nx, self.ny) if block == "x" else Polynomial.y(i, self.nx, self.ny)
        if v == "(":
            p = self.expr()
            self.expect(")")
            return p
        raise PolynomialSyntaxError(f"unexpected {v or 'end of input'!r}", col)


def parse_polynomial(text: str, nx: int, ny: int = 0) -> Polynomial:
    """Parse ``3.5*x1^2*y2 - x2 + 1``-style text.

    Supports ``+ - * /`` (division by constants only), ``^`` or ``**`` with
    integer exponents, and parentheses.  ``x``/``y`` without an index are
    accepted when the block has a single variable.
    """
    return _Parser(text, nx, ny).parse()

