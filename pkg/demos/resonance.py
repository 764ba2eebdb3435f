"""Show how a square coupling makes eigenvalues collide and blocks control.

Run:  python3 demos/resonance.py
"""
from jordanctl.criteria import check_boundary, check_gap
from jordanctl.model import SystemParams, compute_spectrum

for alpha in (2, 4, 9):
    p = SystemParams(2, 1, alpha)
    v = check_boundary(p, 20)
    spec = compute_spectrum(p, 6)
    cols = sorted({tuple(sorted(c)) for c in spec.collisions})[:3]
    print(f"alpha={alpha}: {v.outcome_label():<16} first collisions {cols}")

print("gap certificate (alpha=2):", check_gap(SystemParams(2, 1, 2), 50).rho)
