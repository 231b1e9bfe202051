"""Line-oriented text reports.

Grammar (one item per line, UTF-8, ``\\n`` line endings)::

    report   := header line*
    header   := "# sipsos report 1"
    line     := comment | blank | pair | matrix
    comment  := "#" any-text
    pair     := KEY " = " VALUE
    matrix   := "matrix " KEY " " ROWS " " COLS "\\n" row{ROWS} "end"
    row      := NUMBER (" " NUMBER){COLS-1}
    KEY      := [A-Za-z0-9_.@\\[\\]-]+

``VALUE`` is a single token, a space-separated list of numeric tokens, or
free text (anything containing a non-numeric token).  Floats are
written with ``repr`` (shortest string that round-trips), so every number in a
report reads back bit-exactly; ``nan``, ``inf`` and ``-inf`` are spelled out.
Booleans are ``true``/``false``.  Keys are unique within a report.
Wall-clock times are omitted unless requested, which keeps reports of the
same file and seed byte-identical.
"""
from __future__ import annotations

import math
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

HEADER = "# sipsos report 1"

Value = Union[str, int, float, bool, Sequence[float], None]


def fmt_float(v: float) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def fmt_value(v: Value) -> str:
    if v is None:
        return "none"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    if isinstance(v, str):
        if "\n" in v:
            raise ValueError("report values must be single-line")
        return v
    arr = np.asarray(v).ravel()
    if arr.dtype.kind in "iu":
        return " ".join(str(int(a)) for a in arr)
    return " ".join(fmt_float(a) for a in arr)


class ReportWriter:
    """Accumulate pairs and matrix blocks, then render."""

    def __init__(self):
        self._lines: List[str] = [HEADER]
        self._keys: set = set()

    def _key(self, key: str):
        if key in self._keys:
            raise KeyError(f"duplicate report key {key!r}")
        if not key or any(c.isspace() for c in key) or key == "end":
            raise ValueError(f"bad report key {key!r}")
        self._keys.add(key)

    def comment(self, text: str):
        self._lines.append("# " + text)

    def pair(self, key: str, value: Value):
        self._key(key)
        self._lines.append(f"{key} = {fmt_value(value)}")

    def matrix(self, key: str, M):
        self._key(key)
        M = np.atleast_2d(np.asarray(M, dtype=float))
        r, c = M.shape
        self._lines.append(f"matrix {key} {r} {c}")
        for row in M:
            self._lines.append(" ".join(fmt_float(v) for v in row))
        self._lines.append("end")

    def render(self) -> str:
        return "\n".join(self._lines) + "\n"


def _token(tok: str):
    if tok == "true":
        return True
    if tok == "false":
        return False
    if tok == "none":
        return None
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        return float(tok)
    except ValueError:
        return tok


def parse_report(text: str) -> Tuple[Dict[str, object], Dict[str, np.ndarray]]:
    """Inverse of :class:`ReportWriter`: ``(pairs, matrices)``.

    Single-token values become ``bool``/``int``/``float``/``str``; a list of
    numeric tokens becomes a list; anything else stays a string.
    """
    lines = text.split("\n")
    if not lines or lines[0] != HEADER:
        raise ValueError("missing report header")
    pairs: Dict[str, object] = {}
    mats: Dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        i += 1
        if not line or line.startswith("#"):
            continue
        if line.startswith("matrix "):
            _, key, r, c = line.split()
            r, c = int(r), int(c)
            rows = [[float(t) for t in lines[i + j].split()] for j in range(r)]
            if lines[i + r] != "end":
                raise ValueError(f"matrix {key}: missing end")
            mats[key] = np.array(rows, dtype=float).reshape(r, c)
            i += r + 1
            continue
        key, sep, val = line.partition(" = ")
        if not sep:
            raise ValueError(f"line {i}: expected 'key = value'")
        toks = [_token(t) for t in val.split(" ")]
        if len(toks) == 1:
            pairs[key] = toks[0]
        elif all(isinstance(t, (int, float)) for t in toks):
            pairs[key] = toks
        else:
            pairs[key] = val
    return pairs, mats


# ---------------------------------------------------------------------------
# domain serializers
# ---------------------------------------------------------------------------

def write_solve_report(rw: ReportWriter, reports: Iterable, timing: bool = False,
                       moment_matrices: bool = True):
    """Per-order sections keyed ``k{K}.*``."""
    reports = list(reports)
    rw.pair("orders", [r.k for r in reports] if reports else "none")
    for r in reports:
        p = f"k{r.k}"
        rw.pair(f"{p}.l", r.l)
        rw.pair(f"{p}.status", r.status)
        rw.pair(f"{p}.gamma", r.gamma)
        if r.message:
            rw.pair(f"{p}.message", r.message)
        rw.pair(f"{p}.nvars", r.nvars)
        rw.pair(f"{p}.block_sizes", list(r.block_sizes) if r.block_sizes else "none")
        rw.pair(f"{p}.residuals", list(r.residuals))
        if timing:
            rw.pair(f"{p}.seconds", r.seconds)
        if r.xhat is None:
            continue
        rw.pair(f"{p}.xhat", r.xhat)
        rw.pair(f"{p}.delta", r.delta)
        rw.pair(f"{p}.deltas", r.deltas if r.deltas else "none")
        if moment_matrices and r.w is not None:
            rw.pair(f"{p}.w", r.w.values)
        v = r.flatness
        if v is not None:
            rw.pair(f"{p}.flat", v.flat)
            rw.pair(f"{p}.ranks", np.asarray(v.ranks, dtype=int))
            rw.pair(f"{p}.d_g", v.d_g)
            rw.pair(f"{p}.rank_tol", v.tol)
            if v.flat:
                rw.pair(f"{p}.rank_pair", np.asarray(v.rank_pair, dtype=int))
        if r.atoms is not None:
            rw.matrix(f"{p}.atoms", r.atoms.atoms)
            rw.pair(f"{p}.weights", r.atoms.weights)
            if r.atom_margins is not None and np.size(r.atom_margins):
                rw.matrix(f"{p}.atom_margins", r.atom_margins)


def write_certificate(rw: ReportWriter, prefix: str, cert):
    rw.pair(f"{prefix}.member", cert.member)
    rw.pair(f"{prefix}.status", cert.status)
    rw.pair(f"{prefix}.lambda", cert.lam)
    rw.pair(f"{prefix}.residual", cert.residual)
    if cert.message:
        rw.pair(f"{prefix}.message", cert.message)
    if not cert.grams:
        return
    rw.pair(f"{prefix}.correction_norm", cert.correction_norm)
    rw.pair(f"{prefix}.labels", " ".join(cert.labels))
    rw.pair(f"{prefix}.eig_floors", cert.eig_floors)
    for lab, (kp, lp), G in zip(cert.labels, cert.offsets, cert.grams):
        rw.pair(f"{prefix}.{lab}.orders", [kp, lp])
        rw.matrix(f"{prefix}.{lab}.gram", G)
    if cert.ideal_multipliers is not None and np.size(cert.ideal_multipliers):
        rw.pair(f"{prefix}.ideal_multipliers", cert.ideal_multipliers)


def format_table(reports: Sequence, timing: bool = True, digits: int = 4) -> str:
    """The per-order table ``k | xhat | gamma | delta | time``."""
    def num(v):
        return display(v, digits)

    rows = []
    for r in reports:
        x = "-" if r.xhat is None else "(" + ", ".join(num(v) for v in r.xhat) + ")"
        row = [str(r.k), x, num(r.gamma), "-" if r.xhat is None else num(r.delta)]
        if timing:
            row.append(f"{r.seconds:.2f}")
        if not r.ok:
            row.append(r.status)
        elif r.status != "optimal":
            row.append("(near-optimal)")
        rows.append(row)
    head = ["k", "xhat", "gamma", "delta"] + (["time(s)"] if timing else [])
    width = [max(len(h), *(len(rw[i]) for rw in rows)) if rows else len(h)
             for i, h in enumerate(head)]
    out = ["  ".join(h.rjust(wd) for h, wd in zip(head, width)).rstrip()]
    for rw in rows:
        cells = [c.rjust(wd) for c, wd in zip(rw, width)] + rw[len(width):]
        out.append("  ".join(cells).rstrip())
    return "\n".join(out)


def display(v: float, digits: int = 4) -> str:
    """Fixed-point rendering used by every text table (no ``-0.0000``)."""
    v = float(v)
    if not math.isfinite(v):
        return fmt_float(v)
    s = f"{v:.{digits}f}"
    return "0." + "0" * digits if s == "-0." + "0" * digits else s
