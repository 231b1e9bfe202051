"""Membership certificates over an infinite discrete quantifier set.

Run: python demos/03_certificates.py
"""
from pathlib import Path

import numpy as np

from sipsos import load_problem_file
from sipsos.extraction import certificate_extract, certificate_query
from sipsos.polyring import omega_r, parse_polynomial

PROBLEMS = Path(__file__).resolve().parents[1] / "problems"

# y ranges over {1, 2, ...} with weights 1/(e k!)
prob = load_problem_file(PROBLEMS / "integer_ellipses.sip").build()
print("g(x, y) =", prob.constraints[0])

f = parse_polynomial("4 - x1^2 - x2^2", 2, 1)
cert = certificate_extract(*certificate_query(prob, f, 1, 3))
print(f"\nf = {f}: member = {cert.member}, lambda = {cert.lam:.4f}, "
      f"residual = {cert.residual:.1e}")
for lab, G in zip(cert.labels, cert.grams):
    eig = np.linalg.eigvalsh(G)
    print(f"  {lab}: Gram {G.shape}, eigenvalues in [{eig.min():.1e}, {eig.max():.4f}], "
          f"rank {np.sum(eig > 1e-8 * eig.max())}")

# a negative constant is never certified, at any order
for k in (1, 2):
    c = certificate_extract(*certificate_query(prob, parse_polynomial("-1", 2, 1), k, 3))
    print(f"f = -1, k={k}: member = {c.member}, lambda = {c.lam:.4f}")

# a polynomial that vanishes on the boundary of K may need a small perturbation
prob = load_problem_file(PROBLEMS / "borderline.sip").build()
f = parse_polynomial("1 - x1^2", 1, 1)
print("\nK = [-1, 1], f = 1 - x1^2 vanishes at both endpoints")
plain = certificate_extract(*certificate_query(prob, f, 3, 3))
print(f"  unperturbed:           member = {plain.member}, lambda = {plain.lam:.4f}")
g = f + 0.1 * omega_r(1, 2, 1)
pert = certificate_extract(*certificate_query(prob, g, 3, 3))
print(f"  plus 0.1 * Omega_2:    member = {pert.member}, lambda = {pert.lam:.4f}")
