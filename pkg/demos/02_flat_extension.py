"""Reading several global minimizers off a flat moment matrix.

Run: python demos/02_flat_extension.py
"""
from pathlib import Path

import numpy as np

from sipsos import load_problem_file, run_hierarchy
from sipsos.momat import moment_matrix

PROBLEMS = Path(__file__).resolve().parents[1] / "problems"

prob = load_problem_file(PROBLEMS / "multi_minimizer.sip").build()
print("objective:", prob.objective)
(r,) = run_hierarchy(prob, [2], tol=1e-9)
print(f"gamma_2 = {r.gamma:.8f}")

# xhat is the mean of the minimizers, which is not a minimizer here
print("xhat =", np.round(r.xhat, 6))

for t in range(r.w.half_degree + 1):
    s = np.linalg.svd(moment_matrix(r.w, t), compute_uv=False)
    print(f"H^({t}) singular values:", np.array2string(s, precision=2))

v = r.flatness
print(f"ranks {v.ranks}, flat = {v.flat}, rank pair {v.rank_pair}")
for u, lam in zip(r.atoms.atoms, r.atoms.weights):
    fu = prob.objective.eval_batch(u[None], None)[0]
    print(f"atom {np.round(u, 6)}  weight {lam:.6f}  f = {fu:.8f}")
print("constraint margins at the atoms:", np.round(r.atom_margins.ravel(), 6))
