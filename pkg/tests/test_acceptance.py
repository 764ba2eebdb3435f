"""Acceptance suite: one PASS/FAIL line per criterion, pinned tolerances.

Each test logs its verdict through the ``record`` fixture before asserting, so
the summary at the end of a run lists every criterion even when one fails.
"""
import random
import time

import mpmath as mp
import numpy as np
import sympy as sp

from jordanctl import construct, opcalc
from jordanctl.arith import Surd
from jordanctl.criteria import (check_gap, dyadic_block_maxima, estimate_T_theta,
                                liouville_theta)
from jordanctl.errors import IncompatibleInitialState
from jordanctl.model import SystemParams, compute_spectrum, eigen_residual, kalman_matrix
from jordanctl.moments import ExponentFamily, biortho, triangular_reduce
from jordanctl.sim import duality_residual, observability_ratio, simulate_boundary
from jordanctl.synth import (ControlSignal, InitialState, moment_targets_alpha0,
                             project_onto_X, synthesize_alpha0, synthesize_boundary,
                             synthesize_resonant)


def _fmt(x) -> str:
    return mp.nstr(mp.mpf(x), 3) if not isinstance(x, (int, float)) else f"{x:.3g}"


# ----- spectral closed forms -------------------------------------------------

def test_spectral_closed_forms(record):
    t0 = time.perf_counter()
    worst_res = mp.mpf(0)
    literal, branch, signed = mp.mpf(0), mp.mpf(0), mp.mpf(0)
    odd_literal = mp.mpf(0)
    for n in (2, 3, 4, 5):
        for d in (1, 2):
            for alpha in (-2, -1, 0, 1, 2):
                p = SystemParams(n, d, alpha, precision=30)
                spec = compute_spectrum(p, 50)
                for pair in spec:
                    worst_res = max(worst_res, eigen_residual(p, pair) / max(1, abs(pair.lam)))
                if alpha == 0:
                    continue
                with mp.workdps(30):
                    for k in range(1, 51):
                        shifted = [spec[(j, k)].lam - d * k * k for j in range(n)]
                        want = alpha * mp.mpf(k) ** (2 * (n - 1))
                        prod = mp.fprod(shifted)
                        err = abs(prod - want) / abs(want)
                        literal = max(literal, err)
                        if n % 2:
                            odd_literal = max(odd_literal, err)
                        signed = max(signed, abs(prod - (-1) ** (n - 1) * want) / abs(want))
                        branch = max(branch, max(abs(z ** n - want) for z in shifted) / abs(want))
    elapsed = time.perf_counter() - t0
    ok_res = worst_res <= 1e-12 and elapsed < 5
    ok_lit = literal <= 1e-10
    ok_branch = branch <= 1e-10 and signed <= 1e-10
    record("A1a eigen residuals and runtime", ok_res,
           f"max scaled residual {_fmt(worst_res)}, {elapsed:.2f} s")
    record("A1b branch product equals alpha k^(2(n-1))", ok_lit,
           f"max rel deviation {_fmt(literal)} (odd n only: {_fmt(odd_literal)})")
    record("A1c (lambda - dk^2)^n = alpha k^(2(n-1)) on every branch", ok_branch,
           f"per-branch {_fmt(branch)}, product with sign (-1)^(n-1) {_fmt(signed)}")
    assert ok_res and ok_branch
    assert ok_lit, "for even n the n roots of z^n = c multiply to -c"


# ----- resonance -------------------------------------------------------------

def test_resonance_exactness(record):
    ok = True
    worst = mp.mpf(0)
    for alpha, m in ((1, 1), (4, 2), (9, 3)):
        p = SystemParams(2, 1, alpha, precision=40)
        spec = compute_spectrum(p, 50)
        found = {tuple(sorted(c)) for c in spec.collisions}
        want = {((0, k), (1, k + m)) for k in range(1, 51 - m)}
        ok &= want <= found
        for a, b in want:
            worst = max(worst, abs(spec[a].lam - spec[b].lam))
    p2 = SystemParams(2, 1, 2, precision=30)
    no_coll = not compute_spectrum(p2, 200).collisions
    cert = check_gap(p2, 200)
    ok = ok and worst <= 1e-12 and no_coll and cert.rho > 0 and not cert.violations
    record("A2 resonance exactness", ok,
           f"collision defect {_fmt(worst)}, alpha=2 collisions {not no_coll}, rho {cert.rho:.4g}")
    assert ok


# ----- Kalman determinant -------------------------------------------------

def _kalman_det_exact(n: int, d: int, alpha: int, k: int) -> sp.Integer:
    D = sp.Matrix(n, n, lambda i, j: d if i == j else (1 if j == i + 1 else 0))
    A = sp.zeros(n, n)
    A[n - 1, 0] = alpha
    B = sp.Matrix([0] * (n - 1) + [1])
    M = k * k * D + A
    cols, c = [], B
    for _ in range(n):
        cols.append(c)
        c = M * c
    return abs(sp.Matrix.hstack(*cols).det())


def test_kalman_determinant(record):
    worst = mp.mpf(0)
    for n in range(2, 7):
        for d, alpha in ((1, 0), (2, -3), (1, 5)):
            p = SystemParams(n, d, alpha, precision=40)
            for k in range(1, 21):
                res = kalman_matrix(p, k)
                brute = mp.mpf(int(_kalman_det_exact(n, d, alpha, k)))
                worst = max(worst, abs(res.closed_form - brute) / brute,
                            abs(res.abs_det - brute) / brute)
    ok = worst <= 1e-10
    record("A3 Kalman determinant", ok, f"max relative deviation {_fmt(worst)}")
    assert ok


# ----- biorthogonality ------------------------------------------------------

def test_biorthogonality(record):
    t0 = time.perf_counter()
    exps = [k * k for k in range(1, 13)]
    with mp.workdps(300):
        plain = biortho(ExponentFamily(exps, 1, 300)).residual
        general = biortho(ExponentFamily(exps, 1, 300, eta=3)).residual
    elapsed = time.perf_counter() - t0
    ok = plain <= 1e-30 and general <= 1e-30 and elapsed < 30
    record("A4 biorthogonality", ok,
           f"eta=1 {_fmt(plain)}, eta=3 {_fmt(general)}, {elapsed:.1f} s")
    assert ok


# ----- duality -----------------------------------------------------------

def _random_case(rng: random.Random):
    n = rng.choice((2, 3))
    alpha = rng.choice((-2, -1, 0, 1, 2, 3))
    d = rng.choice((1, 2))
    p = SystemParams(n, d, alpha, precision=40)
    with mp.workdps(40):
        y0 = InitialState.random(n, range(1, 5), seed=rng.randint(0, 10 ** 6), complex_values=True)
        terms = [(mp.mpc(rng.uniform(0.2, 3), rng.uniform(-1, 1)), rng.randint(0, 2),
                  mp.mpc(rng.uniform(-1, 1), rng.uniform(-1, 1))) for _ in range(3)]
        v = ControlSignal(mp.mpf(rng.uniform(0.2, 1.0)), 0, terms, None, 40)
    # alpha = 0: j picks the chain element e_{n-j}; otherwise the branch
    top = n
    phiT = [(rng.randrange(top), rng.randint(1, 4), mp.mpc(rng.uniform(-1, 1), rng.uniform(-1, 1)))
            for _ in range(2)]
    return p, y0, v, phiT


def test_duality_identity(record):
    rng = random.Random(2024)
    worst = mp.mpf(0)
    for _ in range(20):
        p, y0, v, phiT = _random_case(rng)
        worst = max(worst, duality_residual(p, y0, v, phiT))
    ok = worst <= 1e-8
    record("A5 duality identity", ok, f"20 cases, max residual {_fmt(worst)}")
    assert ok


# ----- end-to-end boundary null control ----------------------------------------

def test_boundary_null_control(record):
    t0 = time.perf_counter()
    p = SystemParams(2, 1, 2, precision=300)
    y0 = InitialState.random(2, range(1, 9), seed=7)
    moments, terminal, norms = [], [], []
    for K in (4, 8, 16):
        res = synthesize_boundary(p, y0, K, mp.mpf("0.5"))
        moments.append(res.report.worst)
        traj = simulate_boundary(p, y0, res.control, 64)
        terminal.append(traj.max_terminal(range(1, K + 1)))
        norms.append(traj.norm_hminus1())
    elapsed = time.perf_counter() - t0
    a = max(moments) <= 1e-30
    b = max(terminal) <= 1e-8
    c = norms[0] > norms[1] > norms[2]
    record("A6a moment residuals", a, f"max {_fmt(max(moments))}")
    record("A6b synthesized modes at T", b, f"max |z_k(T)| {_fmt(max(terminal))}")
    record("A6c H^-1 norm decreasing in K", c,
           "K=4,8,16 -> " + ", ".join(_fmt(x) for x in norms))
    record("A6 runtime", elapsed < 60, f"{elapsed:.1f} s")
    assert a and b and c and elapsed < 60


# ----- alpha = 0 Jordan pipeline ------------------------------------------

def _dense_Ak(d, k, n):
    # rows of the moment system written out directly, solved with a full LU
    A = mp.zeros(n, n)
    A[0, 0] = d
    for j in range(1, n):
        A[j, j - 1] = -mp.mpf(k) ** (2 * (j - 1)) / mp.factorial(j - 1)
        A[j, j] = d * mp.mpf(k) ** (2 * j) / mp.factorial(j)
    return A


def test_alpha0_pipeline(record):
    p = SystemParams(3, 1, 0, precision=80)
    T = 1
    y0 = InitialState.random(3, range(1, 6), seed=3)
    M, Mt = moment_targets_alpha0(p, y0, 5, T, return_tilde=True)
    worst = mp.mpf(0)
    with mp.workdps(80):
        for k in range(1, 6):
            rhs = mp.matrix([Mt[(j, k)] for j in range(3)])
            dense = mp.lu_solve(_dense_Ak(1, k, 3), rhs)
            tri = triangular_reduce(p, k, [Mt[(j, k)] for j in range(3)])
            worst = max(worst, max(abs(dense[j] - tri[j]) for j in range(3)))
    res = synthesize_alpha0(p, y0, 5, T)
    # the control must also satisfy the unreduced system A_k X_k = e^{-dk^2T} Mtilde_k
    unreduced = mp.mpf(0)
    with mp.workdps(80):
        for k in range(1, 6):
            X = mp.matrix([res.control.moment(k * k, j) for j in range(3)])
            lhs = _dense_Ak(1, k, 3) * X
            for j in range(3):
                unreduced = max(unreduced, abs(lhs[j] * mp.exp(k * k * T) - Mt[(j, k)]))
    traj = simulate_boundary(p, y0, res.control, 5)
    term = traj.max_terminal(range(1, 6))
    ok = worst <= 1e-20 and term <= 1e-8
    record("A7 alpha=0 Jordan pipeline", ok,
           f"reduction vs dense {_fmt(worst)}, unreduced moments {_fmt(unreduced)}, "
           f"max |z_k(T)| {_fmt(term)}")
    assert ok


# ----- resonant subspace ----------------------------------------------------------

def test_resonant_subspace(record):
    p = SystemParams(2, 1, 4, precision=300)
    K = 6
    worst = mp.mpf(0)
    succeeded = 0
    for seed in range(10):
        with mp.workdps(300):
            y0 = project_onto_X(InitialState.random(2, range(1, K + 1), seed=seed), 2, 1, 300)
        res = synthesize_resonant(p, y0, K, mp.mpf("0.5"))
        worst = max(worst, res.report.worst)
        succeeded += 1
    detected = 0
    for seed in range(100, 110):
        y0 = InitialState.random(2, range(1, K + 1), seed=seed)
        try:
            synthesize_resonant(p, y0, K, mp.mpf("0.5"))
        except IncompatibleInitialState as exc:
            if exc.report is not None and not exc.report.member:
                detected += 1
    ok = succeeded == 10 and worst <= 1e-30 and detected == 10
    record("A8 resonant subspace", ok,
           f"{succeeded}/10 projected synthesized (max residual {_fmt(worst)}), "
           f"{detected}/10 violations reported")
    assert ok


# ----- pointwise T_theta ---------------------------------------------------------

def test_pointwise_T_theta(record):
    theta = Surd(-1, 1, 2)
    est = estimate_T_theta(theta, 1, 10_000)
    a = est.running_max <= 0.005
    blocks = dyadic_block_maxima(theta, 1, (100, 1000, 5000))
    b = blocks[0] >= blocks[1] >= blocks[2]
    p = SystemParams(2, 1, 2, precision=50)
    lt = liouville_theta(0.05, 1, designed_terms=5)
    qs = [q for _, q in lt.convergents(4)]
    ratios = [observability_ratio(p, lt, q, mp.mpf("0.025")) for q in qs]
    c = all(x < y for x, y in zip(ratios, ratios[1:]))
    record("A9a T_theta over k <= 1e4", a,
           f"running max {_fmt(est.running_max)} at k={est.argmax_k} (bound 0.005)")
    record("A9b dyadic block maxima non-increasing", b,
           ", ".join(_fmt(x) for x in blocks))
    record("A9c observability ratio increasing", c,
           "q=" + ",".join(map(str, qs)) + " -> " + ", ".join(_fmt(r) for r in ratios))
    assert a and b and c


# ----- explicit counterexample ------------------------------------------------------------

def test_counterexample(record):
    t0 = time.perf_counter()
    ce = construct.build_counterexample()
    elapsed = time.perf_counter() - t0
    rep = ce.report
    w = rep.witness
    left, right = construct.sign_anchors()
    anchors = (sp.simplify(left - (1 / sp.pi - 3 * sp.sqrt(3) / 16)) == 0
               and sp.simplify(right - (-1 / sp.pi + 3 * sp.sqrt(3) / 16)) == 0
               and float(left) < 0 < float(right))
    ok = (rep.ok and w.max_residual_psi <= 1e-6 and w.max_residual_phi <= 1e-6
          and w.max_phi_on_omega <= 1e-10 and w.boundary <= 1e-10
          and ce.constants.C1 > 0 and ce.constants.C2 > 0 and anchors and elapsed < 10)
    record("A10 explicit counterexample", ok,
           f"residuals {w.max_residual_psi:.2e}/{w.max_residual_phi:.2e}, "
           f"|phi| on omega {w.max_phi_on_omega:.1e}, boundary {w.boundary:.1e}, "
           f"C1={ce.constants.C1:.4g}, C2={ce.constants.C2:.4g}, anchors {anchors}, "
           f"{elapsed:.1f} s")
    assert ok


# ----- algebraic resolvability ---------------------------------------------------------

def test_algebraic_resolvability(record):
    chain = opcalc.verify_chain()
    ok1, _ = opcalc.verify_identity_MstarLstar()
    ok2, _ = opcalc.verify_identity_LM()
    _, Mstar = opcalc.build_Mstar_chain()
    I2 = opcalc.DiffOp.identity(2)
    poly1, _ = opcalc.polynomial_oracle(Mstar @ opcalc.build_Lstar(), I2, degree=6, trials=2)
    poly2, _ = opcalc.polynomial_oracle(opcalc.build_L() @ opcalc.build_M(), I2, degree=6,
                                        trials=2)
    q = construct.build_counterexample().q
    conv = opcalc.fd_convergence([q.derivative(i) for i in range(3)], (1.20, 1.24), 0.008, 3)
    orders = [float(np.log2(a[1] / b[1])) for a, b in zip(conv, conv[1:])]
    fd_ok = all(o >= 3 for o in orders)
    chain_ok = all(ok for ok, _ in chain)
    ok = chain_ok and ok1 and ok2 and poly1 and poly2 and fd_ok
    record("A11 algebraic resolvability", ok,
           f"chain {sum(ok for ok, _ in chain)}/5, M*L*=Id {ok1}, LM=Id {ok2}, "
           f"polynomial {poly1 and poly2}, FD orders " + ", ".join(f"{o:.2f}" for o in orders))
    assert ok
