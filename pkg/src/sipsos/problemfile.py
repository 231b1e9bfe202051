"""The ``.sip`` problem-file format (TOML).

Example::

    name = "toy"

    [variables]
    n = 2
    m = 1

    [objective]
    f = "x1^2 + x2^2"

    [constraints]
    quantified = ["1 - x1*y1 - x2*y1^2"]
    equalities = []
    inequalities = ["4 - x1^2 - x2^2"]

    [[quantifier]]
    set = { kind = "box", bounds = [[0.0, 1.0]] }
    measure = { kind = "box" }

    [options]
    order = [2, 4]

Every table and key is validated; unknown keys are reported with their dotted
path and line number.  Polynomials use the text syntax of
:func:`sipsos.polyring.parse_polynomial`.
"""
from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import tomli
import tomli_w

from .measures import MeasureSpec
from .polyring import Polynomial, PolynomialSyntaxError, parse_polynomial
from .regions import ExpressionError, gated_samples, region_from_description
from .relaxation import QuantifierPiece, SipProblem

__all__ = [
    "ProblemFileError",
    "ProblemFile",
    "parse_problem_text",
    "load_problem_file",
    "dump_problem_file",
    "read_point_file",
    "DEFAULT_SAMPLES",
]

DEFAULT_SAMPLES = 10000

_TOP = {"name", "description", "variables", "objective", "constraints", "quantifier", "options"}
_VARIABLES = {"n", "m"}
_OBJECTIVE = {"f"}
_CONSTRAINTS = {"quantified", "equalities", "inequalities"}
_PIECE = {"set", "measure", "label"}
_SET_KEYS = {
    "box": {"kind", "bounds"},
    "simplex": {"kind", "dim"},
    "cross": {"kind", "dim"},
    "points": {"kind", "points"},
    "integers": {"kind", "kmax"},
    "implicit": {"kind", "constraints", "lower", "upper"},
    "level_set": {"kind", "phi", "level", "nonnegative"},
    "union": {"kind", "pieces"},
}
_MEASURE_KEYS = {
    "box": {"kind", "bounds"},
    "simplex": {"kind"},
    "cross": {"kind"},
    "discrete": {"kind", "points", "weights"},
    "samples": {"kind", "points", "file", "count", "gate_degree", "gate_dim"},
    "factorial": {"kind", "normalized"},
}
_OPTIONS = {"order", "l", "tol", "rank_tol", "seed", "gap_budget", "best_point",
            "best_value", "certify", "time_budget"}
_CERTIFY = {"f", "order", "l", "epsilon", "omega_r"}


class ProblemFileError(ValueError):
    """Malformed problem file; ``line``/``column`` locate the problem when known."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None,
                 path: str = "<string>"):
        loc = path
        if line is not None:
            loc += f":{line}"
            if column is not None:
                loc += f":{column}"
        super().__init__(f"{loc}: {message}")
        self.line = line
        self.column = column
        self.path = path


@dataclass(eq=True)
class ProblemFile:
    """Parsed, validated contents of a ``.sip`` file."""

    n: int
    m: int
    objective: str
    quantified: List[str]
    pieces: List[dict]
    equalities: List[str] = field(default_factory=list)
    inequalities: List[str] = field(default_factory=list)
    options: Dict[str, object] = field(default_factory=dict)
    name: str = ""
    description: str = ""
    base_dir: Optional[str] = field(default=None, compare=False)

    def to_dict(self) -> dict:
        out = {}
        if self.name:
            out["name"] = self.name
        if self.description:
            out["description"] = self.description
        out["variables"] = {"n": self.n, "m": self.m}
        out["objective"] = {"f": self.objective}
        out["constraints"] = {"quantified": list(self.quantified),
                              "equalities": list(self.equalities),
                              "inequalities": list(self.inequalities)}
        out["quantifier"] = copy.deepcopy(self.pieces)
        if self.options:
            out["options"] = copy.deepcopy(self.options)
        return out

    # building the numeric problem ------------------------------------------------
    def polynomial(self, text: str) -> Polynomial:
        return parse_polynomial(text, self.n, self.m)

    def order_range(self) -> Tuple[int, int]:
        o = self.options.get("order")
        if o is None:
            return None
        return (o, o) if isinstance(o, int) else (int(o[0]), int(o[1]))

    def build(self, seed: Optional[int] = None, sample_files: Sequence[str] = (),
              l: Optional[int] = None) -> SipProblem:
        """Instantiate regions and measures (drawing samples where needed)."""
        seed = int(self.options.get("seed", 0)) if seed is None else seed
        rng = np.random.default_rng(seed)
        files = list(sample_files)
        pieces = []
        for i, pc in enumerate(self.pieces):
            region = region_from_description(_set_desc(pc["set"]), self.m) if "set" in pc else None
            meas = self._measure(pc.get("measure"), region, rng, files, i)
            pieces.append(QuantifierPiece(meas, region, pc.get("label", f"Q{i + 1}")))
        best = None
        if "best_point" in self.options:
            pt = np.asarray(self.options["best_point"], dtype=float)
            f = self.polynomial(self.objective)
            best = (pt, float(f.eval_batch(pt[None], None)[0]))
        return SipProblem(
            self.n, self.m, self.polynomial(self.objective),
            [self.polynomial(t) for t in self.quantified], pieces,
            [self.polynomial(t) for t in self.equalities],
            [self.polynomial(t) for t in self.inequalities],
            name=self.name, options=dict(self.options), best_known=best)

    def _measure(self, desc, region, rng, files, i) -> MeasureSpec:
        if desc is None:
            if region is None:
                raise ProblemFileError(f"quantifier piece {i + 1} needs a set or a measure")
            return region.default_measure(rng, DEFAULT_SAMPLES)
        kind = desc["kind"]
        if kind == "box":
            bounds = desc.get("bounds")
            if bounds is None:
                if region is None or region.kind != "box":
                    raise ProblemFileError(f"quantifier piece {i + 1}: box measure needs bounds")
                bounds = region.bounds
            return MeasureSpec.box(bounds)
        if kind == "simplex":
            return MeasureSpec.simplex(self.m)
        if kind == "cross":
            return MeasureSpec.cross_polytope(self.m)
        if kind == "discrete":
            return MeasureSpec.discrete(desc["points"], desc.get("weights"))
        if kind == "factorial":
            return MeasureSpec.factorial(bool(desc.get("normalized", True)))
        # samples
        if files:
            pts = read_point_file(files.pop(0), self.m)
        elif "points" in desc:
            pts = np.asarray(desc["points"], dtype=float).reshape(-1, self.m)
        elif "file" in desc:
            p = Path(desc["file"])
            if not p.is_absolute() and self.base_dir:
                p = Path(self.base_dir) / p
            pts = read_point_file(p, self.m)
        else:
            if region is None:
                raise ProblemFileError(f"quantifier piece {i + 1}: samples need a set to draw from")
            count = int(desc.get("count", DEFAULT_SAMPLES))
            return MeasureSpec.samples(gated_samples(
                region, count, int(desc.get("gate_degree", 4)), rng, desc.get("gate_dim")))
        return MeasureSpec.samples(pts)


def _set_desc(d: dict) -> dict:
    if d.get("kind") == "union":
        return {**d, "pieces": [_set_desc(p) for p in d["pieces"]]}
    return d


def read_point_file(path, m: int) -> np.ndarray:
    """Whitespace-separated points, one per line; ``#`` starts a comment."""
    try:
        pts = np.loadtxt(path, dtype=float, comments="#", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ProblemFileError(f"cannot read point file: {exc}", path=str(path)) from None
    if pts.size == 0:
        raise ProblemFileError("point file is empty", path=str(path))
    if pts.shape[1] != m:
        raise ProblemFileError(f"points have {pts.shape[1]} coordinates, expected {m}",
                               path=str(path))
    return pts


# ---------------------------------------------------------------------------
# parsing and validation
# ---------------------------------------------------------------------------

def _locate(text: str, key: str, after: int = 0) -> Optional[int]:
    # 1-based line of the first ``key =`` or ``[key]`` occurrence at/after line ``after``
    pat = re.compile(rf'(^|[\s{{,\.])"?{re.escape(key)}"?\s*=|^\s*\[+\s*([\w\.]*\.)?{re.escape(key)}\s*\]+')
    for i, line in enumerate(text.splitlines(), start=1):
        if i >= after and pat.search(line):
            return i
    return None


def _locate_value(text: str, value: str) -> Optional[Tuple[int, int]]:
    for i, line in enumerate(text.splitlines(), start=1):
        j = line.find(value)
        if j >= 0:
            return i, j + 1
    return None


class _Validator:
    def __init__(self, text: str, path: str):
        self.text = text
        self.path = path

    def fail(self, message: str, key: Optional[str] = None, line: Optional[int] = None,
             column: Optional[int] = None):
        if line is None and key is not None:
            line = _locate(self.text, key.split(".")[-1].split("[")[0])
        raise ProblemFileError(message, line, column, self.path)

    def keys(self, table, allowed, where: str):
        if not isinstance(table, dict):
            self.fail(f"{where} must be a table", where)
        for k in table:
            if k not in allowed:
                self.fail(f"unknown key '{where + '.' if where else ''}{k}' "
                          f"(allowed: {', '.join(sorted(allowed))})", k)

    def int_(self, v, where: str, lo: int = 0) -> int:
        if isinstance(v, bool) or not isinstance(v, int) or v < lo:
            self.fail(f"{where} must be an integer >= {lo}", where)
        return v

    def num(self, v, where: str) -> float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(f"{where} must be a number", where)
        return float(v)

    def strlist(self, v, where: str) -> List[str]:
        if not isinstance(v, list) or not all(isinstance(s, str) for s in v):
            self.fail(f"{where} must be a list of strings", where)
        return list(v)

    def poly(self, s: str, n: int, m: int, where: str, x_only: bool = False) -> None:
        try:
            p = parse_polynomial(s, n, m)
        except PolynomialSyntaxError as exc:
            loc = _locate_value(self.text, s)
            line, col = (loc[0], loc[1] + exc.column - 1) if loc else (None, None)
            self.fail(f"{where}: {exc}", line=line, column=col)
        if x_only and not p.is_x_only():
            self.fail(f"{where} must not depend on y", where)

    def expression(self, s: str, m: int, where: str) -> None:
        from .regions import compile_expression
        try:
            compile_expression(s, m)
        except ExpressionError as exc:
            loc = _locate_value(self.text, s)
            line, col = (loc[0], loc[1] + exc.column - 1) if loc else (None, None)
            self.fail(f"{where}: {exc}", line=line, column=col)

    def set_desc(self, d, m: int, where: str) -> None:
        if not isinstance(d, dict) or "kind" not in d:
            self.fail(f"{where} needs a 'kind'", where.split(".")[-1])
        kind = d["kind"]
        if kind not in _SET_KEYS:
            self.fail(f"{where}: unknown set kind {kind!r}", line=_locate_value(self.text, f'"{kind}"')[0]
                      if _locate_value(self.text, f'"{kind}"') else None)
        self.keys(d, _SET_KEYS[kind], where)
        if kind == "box":
            b = d.get("bounds")
            if not isinstance(b, list) or len(b) != m or not all(
                    isinstance(p, list) and len(p) == 2 and p[0] < p[1] for p in b):
                self.fail(f"{where}.bounds must list {m} pairs [lower, upper]", "bounds")
        elif kind in ("simplex", "cross"):
            if self.int_(d.get("dim", m), f"{where}.dim", 1) != m:
                self.fail(f"{where}.dim must equal m = {m}", "dim")
        elif kind == "points":
            pts = d.get("points")
            if not isinstance(pts, list) or not pts or not all(
                    isinstance(p, list) and len(p) == m for p in pts):
                self.fail(f"{where}.points must be a non-empty list of {m}-vectors", "points")
        elif kind == "integers":
            if m != 1:
                self.fail(f"{where}: the integer set needs m = 1", "kind")
            self.int_(d.get("kmax", 60), f"{where}.kmax", 1)
        elif kind == "implicit":
            for s in self.strlist(d.get("constraints", []), f"{where}.constraints"):
                self.expression(s, m, f"{where}.constraints")
            for key in ("lower", "upper"):
                v = d.get(key)
                if not isinstance(v, list) or len(v) != m:
                    self.fail(f"{where}.{key} must be a list of {m} numbers", key)
        elif kind == "level_set":
            if not isinstance(d.get("phi"), str):
                self.fail(f"{where}.phi must be an expression string", "phi")
            self.expression(d["phi"], m, f"{where}.phi")
            self.num(d.get("level", 1.0), f"{where}.level")
        elif kind == "union":
            ps = d.get("pieces")
            if not isinstance(ps, list) or not ps:
                self.fail(f"{where}.pieces must be a non-empty list", "pieces")
            for j, p in enumerate(ps):
                self.set_desc(p, m, f"{where}.pieces[{j}]")

    def measure_desc(self, d, m: int, where: str) -> None:
        if not isinstance(d, dict) or "kind" not in d:
            self.fail(f"{where} needs a 'kind'", "measure")
        kind = d["kind"]
        if kind not in _MEASURE_KEYS:
            self.fail(f"{where}: unknown measure kind {kind!r}", "measure")
        self.keys(d, _MEASURE_KEYS[kind], where)
        if kind == "factorial" and m != 1:
            self.fail(f"{where}: the factorial measure needs m = 1", "measure")
        if kind == "discrete":
            pts = d.get("points")
            if not isinstance(pts, list) or not pts:
                self.fail(f"{where}.points must be a non-empty list", "points")
            w = d.get("weights")
            if w is not None and (len(w) != len(pts) or any(v <= 0 for v in w)):
                self.fail(f"{where}.weights must be positive, one per point", "weights")
        if kind == "samples":
            if "count" in d:
                self.int_(d["count"], f"{where}.count", 1)
            if "gate_degree" in d:
                self.int_(d["gate_degree"], f"{where}.gate_degree", 0)
            if "gate_dim" in d:
                self.int_(d["gate_dim"], f"{where}.gate_dim", 1)
            if "file" in d and not isinstance(d["file"], str):
                self.fail(f"{where}.file must be a path string", "file")

    def options(self, o, n: int, m: int) -> None:
        self.keys(o, _OPTIONS, "options")
        if "order" in o:
            v = o["order"]
            if isinstance(v, list):
                if len(v) != 2:
                    self.fail("options.order must be an integer or [first, last]", "order")
                a, b = (self.int_(x, "options.order", 1) for x in v)
                if a > b:
                    self.fail("options.order must be increasing", "order")
            else:
                self.int_(v, "options.order", 1)
        if "l" in o:
            self.int_(o["l"], "options.l", 0)
        for key in ("tol", "rank_tol", "best_value", "time_budget"):
            if key in o:
                self.num(o[key], f"options.{key}")
        for key in ("seed", "gap_budget"):
            if key in o:
                self.int_(o[key], f"options.{key}", 0)
        if "best_point" in o:
            bp = o["best_point"]
            if not isinstance(bp, list) or len(bp) != n:
                self.fail(f"options.best_point must have {n} entries", "best_point")
        if "certify" in o:
            c = o["certify"]
            self.keys(c, _CERTIFY, "options.certify")
            if "f" in c:
                self.poly(c["f"], n, m, "options.certify.f", x_only=True)


def parse_problem_text(text: str, path: str = "<string>") -> ProblemFile:
    """Parse and validate a problem document."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        msg = str(exc)
        mo = re.search(r"line (\d+), column (\d+)", msg)
        line, col = (int(mo.group(1)), int(mo.group(2))) if mo else (None, None)
        raise ProblemFileError(f"syntax error: {re.sub(r' ?[(]at line.*', '', msg)}",
                               line, col, path) from None
    v = _Validator(text, path)
    v.keys(doc, _TOP, "")
    for sec in ("variables", "objective", "quantifier"):
        if sec not in doc:
            raise ProblemFileError(f"missing section [{sec}]", path=path)
    v.keys(doc["variables"], _VARIABLES, "variables")
    n = v.int_(doc["variables"].get("n"), "variables.n", 1)
    m = v.int_(doc["variables"].get("m"), "variables.m", 1)
    v.keys(doc["objective"], _OBJECTIVE, "objective")
    if not isinstance(doc["objective"].get("f"), str):
        v.fail("objective.f must be a polynomial string", "f")
    v.poly(doc["objective"]["f"], n, m, "objective.f", x_only=True)
    cons = doc.get("constraints", {})
    v.keys(cons, _CONSTRAINTS, "constraints")
    lists = {}
    for key in _CONSTRAINTS:
        lists[key] = v.strlist(cons.get(key, []), f"constraints.{key}")
        for s in lists[key]:
            v.poly(s, n, m, f"constraints.{key}", x_only=key != "quantified")
    pieces = doc["quantifier"]
    if not isinstance(pieces, list) or not pieces:
        v.fail("[[quantifier]] must appear at least once", "quantifier")
    for i, pc in enumerate(pieces):
        where = f"quantifier[{i}]"
        v.keys(pc, _PIECE, where)
        if "set" not in pc and "measure" not in pc:
            v.fail(f"{where} needs a set, a measure, or both", "quantifier")
        if "set" in pc:
            v.set_desc(pc["set"], m, f"{where}.set")
        if "measure" in pc:
            v.measure_desc(pc["measure"], m, f"{where}.measure")
    opts = doc.get("options", {})
    v.options(opts, n, m)
    return ProblemFile(n, m, doc["objective"]["f"], lists["quantified"], pieces,
                       lists["equalities"], lists["inequalities"], opts,
                       doc.get("name", ""), doc.get("description", ""))


def load_problem_file(path) -> ProblemFile:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ProblemFileError(f"cannot read file: {exc.strerror}", path=str(path)) from None
    pf = parse_problem_text(text, str(path))
    pf.base_dir = str(p.parent)
    return pf


def dump_problem_file(pf: ProblemFile) -> str:
    return tomli_w.dumps(pf.to_dict())
