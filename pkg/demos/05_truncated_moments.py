"""Recovering an atomic measure from its degree-4 moment matrix.

Run: python demos/05_truncated_moments.py
"""
from fractions import Fraction as Fr

import numpy as np

from sipsos.extraction import extract_atoms, flatness_check, verify_atoms_in_K
from sipsos.momat import TruncatedSequence
from sipsos.polyring import parse_polynomial
from sipsos.regions import ImplicitSet
from sipsos.relaxation import QuantifierPiece

# basis 1, x1, x2, x1^2, x1 x2, x2^2
H = np.array([
    [3, 0, Fr(2, 3), Fr(2, 3), Fr(-5, 18), Fr(17, 18)],
    [0, Fr(2, 3), Fr(-5, 18), Fr(-2, 9), Fr(13, 54), Fr(7, 108)],
    [Fr(2, 3), Fr(-5, 18), Fr(17, 18), Fr(13, 54), Fr(7, 108), Fr(8, 27)],
    [Fr(2, 3), Fr(-2, 9), Fr(13, 54), Fr(2, 9), Fr(-23, 162), Fr(61, 324)],
    [Fr(-5, 18), Fr(13, 54), Fr(7, 108), Fr(-23, 162), Fr(61, 324), Fr(-17, 648)],
    [Fr(17, 18), Fr(7, 108), Fr(8, 27), Fr(61, 324), Fr(-17, 648), Fr(209, 648)],
], dtype=float)

w = TruncatedSequence.from_moment_matrix(H, 2)
v = flatness_check(w, 1)
print(f"ranks of H^(0), H^(1), H^(2): {v.ranks}; flat = {v.flat}")

mu = extract_atoms(w, v.rank)
for u, lam in zip(mu.atoms, mu.weights):
    print(f"atom ({u[0]:+.6f}, {u[1]:+.6f})  weight {lam:.6f}")
print("moments reproduced:", np.allclose(mu.moments(4).values, w.values, atol=1e-12))

# are the atoms inside K = {x : 1 - x.y >= 0 for all y with y1^4 + y2^4 <= 1}?
g = [parse_polynomial("1 - x1*y1 - x2*y2", 2, 2)]
Q = ImplicitSet(["1 - y1^4 - y2^4"], [-1, -1], [1, 1])
margins = verify_atoms_in_K(mu.atoms, g, [QuantifierPiece(None, Q)])
print("margins min_y g(u, y):", np.round(margins.ravel(), 4))
