"""Build the potential q whose adjoint pair is invisible on the window (5pi/12, 7pi/12).

Run:  python3 demos/counterexample.py
"""
import numpy as np

from jordanctl.construct import OMEGA, build_counterexample

ce = build_counterexample()
c = ce.constants
print(f"C1 = {c.C1:.6f}  C2 = {c.C2:.6f}  tau = {c.tau:.6f}  eps = {c.eps}")
print("verification passed:", ce.report.ok)
x = np.linspace(*OMEGA, 7)
print("phi on the window:", np.array2string(ce.phi(x), precision=2))
print("q on the window:  ", np.array2string(ce.q(x), precision=4))
print(f"sup |q| = {ce.report.q_bound:.4f}")
