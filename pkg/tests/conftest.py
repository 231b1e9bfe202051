from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from sipsos.polyring import Polynomial

ROOT = Path(__file__).resolve().parents[1]
PROBLEMS = ROOT / "problems"

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running, status-only checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@st.composite
def polynomials(draw, nx=2, ny=0, max_deg=3, max_terms=6, coef=5.0):
    """Random sparse polynomial with small integer-ish coefficients."""
    k = draw(st.integers(0, max_terms))
    terms = {}
    for _ in range(k):
        d = draw(st.integers(0, max_deg))
        cut = sorted(draw(st.lists(st.integers(0, d), min_size=nx + ny - 1,
                                   max_size=nx + ny - 1))) if nx + ny > 1 else []
        parts = np.diff([0, *cut, d]).tolist() if nx + ny else []
        ax, ay = tuple(parts[:nx]), tuple(parts[nx:])
        c = draw(st.floats(-coef, coef, allow_nan=False, allow_infinity=False))
        terms[(ax, ay)] = round(c, 3)
    return Polynomial(nx, ny, terms)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = {}


def record_criterion(number, ok, detail):
    _CRITERIA[number] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
