"""Steer the first K modes of a 2x2 Jordan-coupled heat system to rest.

Run:  python3 demos/boundary_null_control.py
"""
import mpmath as mp

from jordanctl.criteria import check_boundary
from jordanctl.model import SystemParams
from jordanctl.sim import simulate_boundary
from jordanctl.synth import InitialState, synthesize_boundary

K = 8
params = SystemParams(2, 1, 2, precision=300)
print("verdict:", check_boundary(params, 50).outcome_label())

y0 = InitialState.random(2, range(1, K + 1), seed=7)
res = synthesize_boundary(params, y0, K, mp.mpf("0.5"))
print(f"moment residual (scaled): {mp.nstr(res.report.max_scaled, 5)}")
print(f"control L2 norm:          {mp.nstr(res.control.norm_L2, 8)}")

traj = simulate_boundary(params, y0, res.control, K)
print(f"max |z_k(T)| over k <= {K}: {mp.nstr(traj.max_terminal(), 5)}")
