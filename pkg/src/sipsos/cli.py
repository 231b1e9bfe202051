"""Command line entry point: ``sipsos {solve,certify,moments,export-sdp} FILE``.

Exit codes: 0 success, 1 numerical failure, 2 usage or parse error.
"""
from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .extraction import certificate_extract, certificate_query
from .measures import CapabilityError, MeasureSpec, moment_table, span_dimension_check
from .polyring import PolynomialSyntaxError, basis, omega_r, parse_polynomial
from .problemfile import ProblemFile, ProblemFileError, load_problem_file
from .relaxation import build_relaxation, k_min, run_hierarchy
from .report import ReportWriter, display, format_table, write_certificate, write_solve_report
from .sdp import write_sdpa

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def parse_order(text: str) -> Tuple[int, int]:
    """``"3"`` or ``"3..5"`` (also ``3-5``, ``3:5``)."""
    for sep in ("..", ":", "-"):
        if sep in text:
            a, b = text.split(sep, 1)
            break
    else:
        a = b = text
    try:
        lo, hi = int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad order range {text!r}") from None
    if lo < 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"bad order range {text!r}")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sipsos", description="Moment-SOS relaxations for polynomial "
                                           "semi-infinite optimization.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("path", help="problem file (.sip)")
    common.add_argument("--order", type=parse_order, metavar="K0..K1",
                        help="relaxation orders (default: file options, else k_min..k_min+2)")
    common.add_argument("--l", type=int, metavar="L", help="measure-side order (default: k)")
    common.add_argument("--tol", type=float, metavar="T", help="SDP solver tolerance")
    common.add_argument("--seed", type=int, metavar="S", help="seed for sampling and search")
    common.add_argument("--samples", action="append", default=[], metavar="FILE",
                        help="point file for the next sampled measure (repeatable)")
    common.add_argument("--report", metavar="PATH", help="structured report destination")
    common.add_argument("--timing", action="store_true",
                        help="record wall-clock seconds in the report")

    s = sub.add_parser("solve", parents=[common], help="run the relaxation hierarchy")
    s.add_argument("--rank-tol", type=float, metavar="T", help="relative singular value cutoff")
    s.add_argument("--no-extract", action="store_true", help="skip flatness and extraction")

    c = sub.add_parser("certify", parents=[common], help="membership certificate for f")
    c.add_argument("-f", "--poly", metavar="POLY", help="polynomial in x (default: options.certify.f)")
    c.add_argument("--epsilon", type=float, metavar="E", help="perturbation weight")
    c.add_argument("--omega-r", type=int, metavar="R", help="perturbation degree parameter")

    m = sub.add_parser("moments", parents=[common], help="measure moment tables and span checks")
    m.add_argument("--degree", type=int, default=2, metavar="D", help="moment degree (default 2)")

    e = sub.add_parser("export-sdp", parents=[common], help="dump a relaxation in SDPA format")
    e.add_argument("-o", "--output", metavar="PATH", help="destination (default: stdout)")
    return p


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _load(args) -> ProblemFile:
    return load_problem_file(args.path)


def _seed(args, pf: ProblemFile) -> int:
    return int(pf.options.get("seed", 0)) if args.seed is None else args.seed


def _orders(args, pf: ProblemFile, problem, fallback=None) -> List[int]:
    rng = args.order or fallback or pf.order_range()
    if rng is None:
        k0 = k_min(problem, args.l)
        rng = (k0, k0 + 2)
    return list(range(rng[0], rng[1] + 1))


def _tol(args, pf: ProblemFile, default: float) -> float:
    return float(pf.options.get("tol", default)) if args.tol is None else args.tol


def _report_path(args, suffix: str) -> Path:
    if args.report:
        return Path(args.report)
    return Path(Path(args.path).stem + suffix)


def _header(rw: ReportWriter, command: str, pf: ProblemFile, seed: int):
    rw.pair("command", command)
    rw.pair("problem", pf.name or Path(pf.base_dir or ".").name)
    rw.pair("n", pf.n)
    rw.pair("m", pf.m)
    rw.pair("seed", seed)


def _write(path: Path, rw: ReportWriter):
    path.write_text(rw.render(), encoding="utf-8")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_solve(args, out) -> int:
    pf = _load(args)
    seed = _seed(args, pf)
    problem = pf.build(seed=seed, sample_files=args.samples)
    orders = _orders(args, pf, problem)
    opts = pf.options
    rank_tol = args.rank_tol if args.rank_tol is not None else float(opts.get("rank_tol", 1e-6))
    reports = run_hierarchy(problem, orders, l=args.l if args.l is not None else opts.get("l"),
                            tol=_tol(args, pf, 1e-7), rank_tol=rank_tol, seed=seed,
                            gap_budget=int(opts.get("gap_budget", 20000)),
                            extract=not args.no_extract)
    rw = ReportWriter()
    _header(rw, "solve", pf, seed)
    rw.pair("tol", _tol(args, pf, 1e-7))
    if problem.best_known is not None:
        rw.pair("best_point", problem.best_known[0])
        rw.pair("best_value", problem.best_known[1])
    write_solve_report(rw, reports, timing=args.timing)
    path = _report_path(args, ".report")
    _write(path, rw)

    print(f"problem {pf.name or args.path}: n={pf.n} m={pf.m} seed={seed}", file=out)
    print(format_table(reports), file=out)
    for r in reports:
        if r.flatness is not None and r.flatness.flat and r.atoms is not None:
            print(f"k={r.k}: flat, rank pair {r.flatness.rank_pair}, "
                  f"{len(r.atoms.weights)} atom(s)", file=out)
            for u, wt in zip(r.atoms.atoms, r.atoms.weights):
                print("  atom (" + ", ".join(display(v) for v in u) + f") weight {display(wt)}",
                      file=out)
        if r.message:
            print(f"k={r.k}: {r.message}", file=out)
    print(f"report written to {path}", file=out)
    return EXIT_OK if any(r.ok or r.status == "infeasible" for r in reports) else EXIT_NUMERIC


def _certify_poly(args, pf: ProblemFile):
    cert_opts = dict(pf.options.get("certify", {}))
    text = args.poly if args.poly is not None else cert_opts.get("f")
    if text is None:
        raise UsageError("certify: no polynomial given (use --poly or options.certify.f)")
    try:
        f = parse_polynomial(text, pf.n, pf.m)
    except PolynomialSyntaxError as exc:
        raise UsageError(f"certify: bad polynomial {text!r}: {exc}") from None
    if not f.is_x_only():
        raise UsageError("certify: the polynomial must depend on x only")
    eps = args.epsilon if args.epsilon is not None else cert_opts.get("epsilon")
    r = args.omega_r if args.omega_r is not None else cert_opts.get("omega_r")
    if (eps is None) != (r is None):
        raise UsageError("certify: --epsilon and --omega-r go together")
    if eps is not None:
        f = f + float(eps) * omega_r(pf.n, int(r), pf.m)
    return text, f, eps, r, cert_opts


def cmd_certify(args, out) -> int:
    pf = _load(args)
    seed = _seed(args, pf)
    text, f, eps, r, cert_opts = _certify_poly(args, pf)
    problem = pf.build(seed=seed, sample_files=args.samples)
    fallback = None
    if "order" in cert_opts:
        o = cert_opts["order"]
        fallback = (o, o) if isinstance(o, int) else tuple(o)
    orders = _orders(args, pf, problem, fallback)
    l = args.l if args.l is not None else cert_opts.get("l", pf.options.get("l"))
    tol = args.tol if args.tol is not None else 1e-9

    rw = ReportWriter()
    _header(rw, "certify", pf, seed)
    rw.pair("f", text)
    if eps is not None:
        rw.pair("epsilon", float(eps))
        rw.pair("omega_r", int(r))
    rw.pair("orders", orders)
    print(f"certify {text}" + (f" + {eps}*Omega_{r}" if eps is not None else "")
          + f" on {pf.name or args.path}", file=out)
    member, failed = False, 0
    for k in orders:
        lk = k if l is None else int(l)
        t0 = time.perf_counter()
        inst, sol = certificate_query(problem, f, k, lk, tol=tol)
        cert = certificate_extract(inst, sol)
        secs = time.perf_counter() - t0
        prefix = f"k{k}"
        rw.pair(f"{prefix}.l", lk)
        write_certificate(rw, prefix, cert)
        if args.timing:
            rw.pair(f"{prefix}.seconds", secs)
        if cert.status not in ("optimal", "near-optimal", "infeasible", "unbounded"):
            failed += 1
        if cert.member:
            member = True
            print(f"k={k} l={lk}: certificate found (lambda={display(cert.lam)}, "
                  f"residual={cert.residual:.2e}, time {secs:.2f}s)", file=out)
            for lab, (kp, lp), G, fl in zip(cert.labels, cert.offsets, cert.grams,
                                            cert.eig_floors):
                print(f"  {lab}: Gram {G.shape[0]}x{G.shape[1]} (k'={kp}, l'={lp}), "
                      f"min eigenvalue {fl:.2e}", file=out)
                for row in G:
                    print("    " + " ".join(display(v).rjust(9) for v in row), file=out)
            break
        print(f"k={k} l={lk}: no certificate at this order (status {cert.status}, "
              f"lambda={display(cert.lam)}); this does not refute nonnegativity on K",
              file=out)
    rw.pair("member", member)
    path = _report_path(args, ".cert")
    _write(path, rw)
    print(f"report written to {path}", file=out)
    return EXIT_NUMERIC if failed == len(orders) else EXIT_OK


def _piece_points(problem, i: int) -> Optional[np.ndarray]:
    meas = problem.pieces[i].measure
    if meas.kind == "samples":
        return meas.points
    return None


def cmd_moments(args, out) -> int:
    pf = _load(args)
    seed = _seed(args, pf)
    problem = pf.build(seed=seed, sample_files=args.samples)
    deg = args.degree
    if deg < 0:
        raise UsageError("moments: --degree must be nonnegative")
    rw = ReportWriter()
    _header(rw, "moments", pf, seed)
    rw.pair("degree", deg)
    status = EXIT_OK
    exps = basis(pf.m, deg).exponents
    for i, piece in enumerate(problem.pieces):
        meas: MeasureSpec = piece.measure
        p = f"piece{i + 1}"
        print(f"{piece.label}: {meas.kind} measure", file=out)
        rw.pair(f"{p}.label", piece.label)
        rw.pair(f"{p}.kind", meas.kind)
        try:
            tab = moment_table(meas, deg)
        except CapabilityError as exc:
            print(f"  capability error at degree {deg}: {exc}", file=out)
            rw.pair(f"{p}.error", str(exc))
            status = EXIT_NUMERIC
            continue
        rw.pair(f"{p}.moments", tab.values)
        for e, v in zip(exps, tab.values):
            mono = "*".join(f"y{j + 1}" + (f"^{a}" if a > 1 else "")
                            for j, a in enumerate(e) if a) or "1"
            print(f"  int {mono} = {display(v)}", file=out)
        pts = _piece_points(problem, i)
        if pts is not None:
            desc = pf.pieces[i].get("measure") or {}
            ref = desc.get("gate_dim")
            gate_deg = int(desc.get("gate_degree", deg))
            ok, dim = span_dimension_check(pts, gate_deg, ref)
            target = ref if ref is not None else math.comb(pf.m + gate_deg, gate_deg)
            verdict = "PASS" if ok else "FAIL"
            print(f"  span check at degree {gate_deg}: {verdict} "
                  f"(dimension {dim} of {target}, {pts.shape[0]} samples)", file=out)
            rw.pair(f"{p}.span_degree", gate_deg)
            rw.pair(f"{p}.span_dim", dim)
            rw.pair(f"{p}.span_target", int(target))
            rw.pair(f"{p}.span_ok", ok)
    if args.report:
        _write(Path(args.report), rw)
        print(f"report written to {args.report}", file=out)
    return status


def cmd_export_sdp(args, out) -> int:
    pf = _load(args)
    seed = _seed(args, pf)
    problem = pf.build(seed=seed, sample_files=args.samples)
    k = _orders(args, pf, problem)[0]
    l = args.l if args.l is not None else pf.options.get("l")
    inst = build_relaxation(problem, k, l)
    dest = args.output or args.report
    if dest:
        with open(dest, "w", encoding="utf-8") as fh:
            write_sdpa(inst.conic, fh)
        print(f"order {k} relaxation ({inst.nvars} variables, "
              f"{len(inst.conic.blocks)} blocks) written to {dest}", file=out)
    else:
        write_sdpa(inst.conic, out)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "certify": cmd_certify, "moments": cmd_moments,
            "export-sdp": cmd_export_sdp}


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args, out)
    except SystemExit as exc:            # --help
        return int(exc.code or 0)
    except (UsageError, ProblemFileError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except CapabilityError as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
