import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import PROBLEMS, polynomials
from sipsos.problemfile import (
    ProblemFile,
    ProblemFileError,
    dump_problem_file,
    load_problem_file,
    parse_problem_text,
    read_point_file,
)

ALL_FILES = sorted(PROBLEMS.glob("*.sip"))

MINIMAL = """\
name = "toy"

[variables]
n = 2
m = 1

[objective]
f = "x1^2 + x2^2"

[constraints]
quantified = ["1 - x1*y1 - x2*y1^2"]

[[quantifier]]
set = { kind = "box", bounds = [[0.0, 1.0]] }
measure = { kind = "box" }
"""


def test_bundled_files_exist():
    assert len(ALL_FILES) >= 10


@pytest.mark.parametrize("path", ALL_FILES, ids=lambda p: p.stem)
def test_bundled_files_round_trip(path):
    pf = load_problem_file(path)
    again = parse_problem_text(dump_problem_file(pf))
    assert again == pf
    assert again.to_dict() == pf.to_dict()


@pytest.mark.parametrize("path", ALL_FILES, ids=lambda p: p.stem)
def test_bundled_files_build(path):
    pf = load_problem_file(path)
    prob = pf.build()
    assert prob.n == pf.n and prob.m == pf.m
    assert len(prob.pieces) == len(pf.pieces)
    assert prob.best_known is not None


@given(polynomials(2, 0), st.lists(polynomials(2, 1), min_size=1, max_size=3),
       st.integers(1, 4), st.floats(1e-9, 1e-5), st.booleans())
def test_generated_documents_round_trip(f, gs, k, tol, with_l):
    opts = {"order": [k, k + 1], "tol": tol}
    if with_l:
        opts["l"] = k + 1
    doc = ProblemFile(2, 1, str(f), [str(g) for g in gs],
                      [{"set": {"kind": "box", "bounds": [[0.0, 1.0]]}, "measure": {"kind": "box"}}],
                      options=opts, name="generated")
    text = dump_problem_file(doc)
    back = parse_problem_text(text)
    assert back == doc
    assert dump_problem_file(back) == text


def test_minimal_document():
    pf = parse_problem_text(MINIMAL)
    assert (pf.n, pf.m, pf.objective) == (2, 1, "x1^2 + x2^2")
    assert pf.order_range() is None
    prob = pf.build()
    assert prob.constraints[0].deg_y == 2


@pytest.mark.parametrize("edit,line,fragment", [
    (("[constraints]", "[constraints]\ncolour = 1"), 11, "constraints.colour"),
    (("measure = {", "radius = 2\nmeasure = {"), 15, "quantifier[0].radius"),
    (('kind = "box" }\n', 'kind = "box", extra = 1 }\n'), 15, "extra"),
    (("[variables]", "[variabels]"), 3, "variabels"),
])
def test_unknown_keys_carry_their_line(edit, line, fragment):
    with pytest.raises(ProblemFileError) as exc:
        parse_problem_text(MINIMAL.replace(*edit), "toy.sip")
    assert exc.value.line == line
    assert fragment in str(exc.value)
    assert str(exc.value).startswith(f"toy.sip:{line}")


def test_toml_syntax_error_names_line_and_column():
    with pytest.raises(ProblemFileError) as exc:
        parse_problem_text(MINIMAL.replace("n = 2", "n = = 2"), "toy.sip")
    assert (exc.value.line, exc.value.column) == (4, 5)


def test_polynomial_error_names_line_and_column():
    with pytest.raises(ProblemFileError) as exc:
        parse_problem_text(MINIMAL.replace('"x1^2 + x2^2"', '"x1^2 + * x2^2"'), "toy.sip")
    assert exc.value.line == 8
    # 'f = "' occupies five columns; the stray '*' is the 8th character of the string
    assert exc.value.column == 5 + 8


@pytest.mark.parametrize("edit,fragment", [
    (("n = 2", "n = 0"), "n"),
    (('f = "x1^2 + x2^2"', 'f = "x1*y1"'), "objective"),
    (('"1 - x1*y1 - x2*y1^2"', '"1 - x3*y1"'), "quantified"),
    (('kind = "box", bounds', 'kind = "ball", bounds'), "set kind"),
])
def test_semantic_errors(edit, fragment):
    with pytest.raises(ProblemFileError, match=fragment):
        parse_problem_text(MINIMAL.replace(*edit))


def test_missing_section():
    with pytest.raises(ProblemFileError, match="objective"):
        parse_problem_text(MINIMAL.replace('[objective]\nf = "x1^2 + x2^2"\n', ""))


def test_sample_files(tmp_path, rng):
    pts = rng.uniform(0, 1, (50, 1))
    p = tmp_path / "pts.txt"
    np.savetxt(p, pts, header="one point per line")
    assert np.allclose(read_point_file(p, 1), pts)
    doc = MINIMAL.replace('measure = { kind = "box" }', 'measure = { kind = "samples", file = "pts.txt" }')
    src = tmp_path / "toy.sip"
    src.write_text(doc)
    prob = load_problem_file(src).build()
    assert np.allclose(prob.pieces[0].measure.points, pts)
    # an explicit file list overrides the document
    q = tmp_path / "other.txt"
    np.savetxt(q, pts[:10])
    prob = load_problem_file(src).build(sample_files=[str(q)])
    assert prob.pieces[0].measure.points.shape == (10, 1)
    with pytest.raises(ProblemFileError, match="coordinates"):
        read_point_file(q, 2)


def test_drawn_samples_depend_only_on_seed():
    doc = MINIMAL.replace('measure = { kind = "box" }', 'measure = { kind = "samples", count = 300 }')
    pf = parse_problem_text(doc)
    a = pf.build(seed=4).pieces[0].measure.points
    b = pf.build(seed=4).pieces[0].measure.points
    c = pf.build(seed=5).pieces[0].measure.points
    assert np.array_equal(a, b) and not np.array_equal(a, c)
