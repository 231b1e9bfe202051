"""Sampled measures on a curve: the span gate and seed sensitivity.

Run: python demos/04_sampled_measures.py
"""
from pathlib import Path

import numpy as np

from sipsos import load_problem_file, run_hierarchy
from sipsos.measures import span_dimension_check

PROBLEMS = Path(__file__).resolve().parents[1] / "problems"

# Q is the curve y1^4 + y2^4 = 1; points come from the set description
pf = load_problem_file(PROBLEMS / "quartic_curve.sip")
for seed in (1, 2, 3):
    prob = pf.build(seed=seed)
    pts = prob.pieces[0].measure.points
    ok, dim = span_dimension_check(pts, 4, 14)
    (r,) = run_hierarchy(prob, [2])
    print(f"seed {seed}: {pts.shape[0]} points, quartic span {dim} (gate {ok}), "
          f"gamma_2 = {r.gamma:.4f}")

# quartics vanishing on the curve: y1^4 + y2^4 - 1 is one, so 15 - 1 = 14
pts = pf.build(seed=1).pieces[0].measure.points
print("max |y1^4 + y2^4 - 1| over samples:", np.abs((pts ** 4).sum(axis=1) - 1).max())

# points on a line cannot carry a measure with support equal to the curve
line = np.c_[np.linspace(-1, 1, 500), np.zeros(500)]
print("points on a line:", span_dimension_check(line, 4, 14))
