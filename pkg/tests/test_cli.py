import io
import shutil

import numpy as np
import pytest

from conftest import PROBLEMS
from sipsos.cli import main, parse_order
from sipsos.report import display, parse_report

PLANE = """\
name = "plane"

[variables]
n = 1
m = 3

[objective]
f = "x1^2"

[constraints]
quantified = ["1 - x1*y1"]

[[quantifier]]
set = { kind = "box", bounds = [[0.0, 1.0], [0.0, 1.0], [-1.0, 1.0]] }
measure = { kind = "samples", file = "plane.txt", gate_degree = 2 }
"""


def run(*argv):
    buf = io.StringIO()
    code = main([str(a) for a in argv], out=buf)
    return code, buf.getvalue()


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def table_rows(text):
    lines = text.splitlines()
    start = next(i for i, ln in enumerate(lines) if ln.split()[:1] == ["k"])
    rows = []
    for ln in lines[start + 1:]:
        if not ln.strip() or not ln.split()[0].isdigit():
            break
        rows.append(ln)
    return rows


def parse_row(row):
    k, rest = row.split(None, 1)
    xs, tail = rest[rest.index("(") + 1:].split(")", 1)
    gamma, delta = tail.split()[:2]
    return int(k), [float(v) for v in xs.split(",")], float(gamma), float(delta)


@pytest.mark.parametrize("text,expect", [("3", (3, 3)), ("3..5", (3, 5)), ("2:4", (2, 4)),
                                         ("1-2", (1, 2))])
def test_parse_order(text, expect):
    assert parse_order(text) == expect


def test_solve_box_problem_reference_values(work):
    code, out = run("solve", PROBLEMS / "interval_box.sip", "--order", "3..5")
    assert code == 0
    rows = [parse_row(r) for r in table_rows(out)]
    assert [r[0] for r in rows] == [3, 4, 5]
    for (_, _, g, _), ref in zip(rows, (0.1803, 0.1899, 0.1926)):
        assert abs(g - ref) <= 2e-3
    assert (work / "interval_box.report").exists()


def test_solve_simplex_measure(work):
    code, out = run("solve", PROBLEMS / "simplex_cubic.sip", "--order", "2", "--report", "simplex.txt")
    assert code == 0
    (_, _, g, _), = [parse_row(r) for r in table_rows(out)]
    assert abs(g - 0.8624) <= 2e-3


def test_table_values_equal_report_values(work):
    run("solve", PROBLEMS / "interval_box.sip", "--order", "3..4", "--report", "r.txt")
    code, out = run("solve", PROBLEMS / "interval_box.sip", "--order", "3..4", "--report", "r.txt")
    pairs, _ = parse_report((work / "r.txt").read_text())
    for k, xs, g, d in (parse_row(r) for r in table_rows(out)):
        assert display(pairs[f"k{k}.gamma"]) == f"{g:.4f}"
        assert display(pairs[f"k{k}.delta"]) == f"{d:.4f}"
        assert [display(v) for v in pairs[f"k{k}.xhat"]] == [f"{v:.4f}" for v in xs]


def test_reports_are_byte_identical_for_same_file_and_seed(work):
    src = work / "curve.sip"
    shutil.copy(PROBLEMS / "quartic_curve.sip", src)
    run("solve", src, "--order", "2", "--seed", "3", "--report", "a.txt")
    run("solve", src, "--order", "2", "--seed", "3", "--report", "b.txt")
    run("solve", src, "--order", "2", "--seed", "4", "--report", "c.txt")
    a, b, c = ((work / f).read_bytes() for f in ("a.txt", "b.txt", "c.txt"))
    assert a == b and a != c


def test_flat_solution_prints_atoms(work):
    code, out = run("solve", PROBLEMS / "multi_minimizer.sip", "--order", "2", "--tol", "1e-9")
    assert code == 0
    assert "flat, rank pair (2, 2)" in out
    assert out.count("weight 0.5000") == 2


def test_syntax_error_exits_two_with_location(work, capsys):
    bad = work / "bad.sip"
    bad.write_text((PROBLEMS / "interval_box.sip").read_text().replace("n = 2", "n = = 2", 1))
    code, _ = run("solve", bad)
    assert code == 2
    err = capsys.readouterr().err
    line = next(i for i, ln in enumerate(bad.read_text().splitlines(), 1) if "n = = 2" in ln)
    assert err.startswith(f"{bad}:{line}:")


@pytest.mark.parametrize("argv", [[], ["solve"], ["frobnicate", "x.sip"],
                                  ["solve", "missing.sip"], ["solve", "x.sip", "--order", "5..3"]])
def test_usage_errors_exit_two(work, argv):
    assert run(*argv)[0] == 2


def test_certify_finds_the_integer_quantifier_certificate(work):
    code, out = run("certify", PROBLEMS / "integer_ellipses.sip")
    assert code == 0
    assert "certificate found" in out and "Gram" in out
    pairs, mats = parse_report((work / "integer_ellipses.cert").read_text())
    k = pairs["orders"]
    assert pairs["member"] is True and pairs[f"k{k}.residual"] <= 1e-8
    assert min(np.atleast_1d(pairs[f"k{k}.eig_floors"])) >= -1e-8
    assert all(key.endswith(".gram") for key in mats)


def test_certify_negative_constant_is_not_refuted_but_not_certified(work):
    code, out = run("certify", PROBLEMS / "integer_ellipses.sip", "-f", "-1", "--order", "1..2")
    assert code == 0
    assert out.count("no certificate at this order") == 2
    assert "does not refute" in out
    assert parse_report((work / "integer_ellipses.cert").read_text())[0]["member"] is False


def test_certify_perturbation_flags(work):
    _, plain = run("certify", PROBLEMS / "borderline.sip")
    _, pert = run("certify", PROBLEMS / "borderline.sip", "--epsilon", "0.1", "--omega-r", "2")
    assert "no certificate" in plain
    assert "certificate found" in pert
    assert run("certify", PROBLEMS / "borderline.sip", "--epsilon", "0.1")[0] == 2
    assert run("certify", PROBLEMS / "borderline.sip", "-f", "x1*y1")[0] == 2


def test_moments_simplex_table(work):
    code, out = run("moments", PROBLEMS / "simplex_cubic.sip", "--degree", "2")
    assert code == 0
    assert "int y1 = 0.2500" in out
    assert "int y1^2 = 0.1000" in out


def test_moments_box_degree_zero(work):
    code, out = run("moments", PROBLEMS / "interval_box.sip", "--degree", "0", "--report", "m.txt")
    assert code == 0
    assert [ln.strip() for ln in out.splitlines() if ln.strip().startswith("int")] == \
        ["int 1 = 1.0000"]
    assert parse_report((work / "m.txt").read_text())[0]["piece1.moments"] == 1.0


def test_moments_span_check_on_planar_samples(work, rng):
    np.savetxt(work / "plane.txt", np.c_[rng.uniform(0, 1, (200, 2)), np.zeros(200)])
    (work / "plane.sip").write_text(PLANE)
    code, out = run("moments", work / "plane.sip")
    assert code == 0
    assert "FAIL (dimension 6 of 10" in out
    np.savetxt(work / "full.txt", rng.uniform(0, 1, (200, 3)))
    code, out = run("moments", work / "plane.sip", "--samples", work / "full.txt")
    assert "PASS (dimension 10 of 10" in out


def test_moments_capability_error_exits_one(work):
    code, out = run("moments", PROBLEMS / "integer_ellipses.sip", "--degree", "40")
    assert code == 1
    assert "capability error at degree 40" in out


def test_export_sdp(work):
    code, _ = run("export-sdp", PROBLEMS / "interval_box.sip", "--order", "3", "-o", "box.dat-s")
    assert code == 0
    text = (work / "box.dat-s").read_text()
    lines = [ln for ln in text.splitlines() if not ln.startswith('"')]
    assert int(lines[0]) == 28 and int(lines[1]) == 3
    code, out = run("export-sdp", PROBLEMS / "interval_box.sip", "--order", "3")
    assert out == text
