"""Lower bounds from successive relaxation orders on a box-quantified problem.

Run: python demos/01_box_measure_hierarchy.py
"""
from pathlib import Path

import numpy as np

from sipsos import load_problem_file, run_hierarchy
from sipsos.report import format_table

PROBLEMS = Path(__file__).resolve().parents[1] / "problems"

pf = load_problem_file(PROBLEMS / "interval_box.sip")
prob = pf.build()
print("objective:  ", prob.objective)
print("constraint: ", prob.constraints[0], " for all y1 in [0, 1]")

# each order k gives an SDP; its value gamma_k bounds the optimum from below
reports = run_hierarchy(prob, [2, 3, 4, 5], tol=1e-8)
print()
print(format_table(reports))

gammas = np.array([r.gamma for r in reports if r.ok])
print()
print("bounds increase with k:", bool(np.all(np.diff(gammas) >= -1e-6)))
best_x, best_f = prob.best_known
print(f"best known feasible point {best_x}, f = {best_f:.4f}")
print(f"gap at the last order: {best_f - gammas[-1]:.4f}")

# delta < 0 means xhat_k violates some constraint at some y; it shrinks as k grows
for r in reports:
    if r.xhat is not None:
        print(f"k={r.k}: worst constraint value over Q at xhat = {r.delta:+.4f}")
