import mpmath as mp
import pytest

from jordanctl.arith import Surd
from jordanctl.criteria import sine_values
from jordanctl.errors import IncompatibleInitialState, IndexMismatch, NonControllableMode
from jordanctl.model import SystemParams, compute_spectrum
from jordanctl.moments import ExponentFamily, biortho
from jordanctl.sim import adjoint_solve
from jordanctl.synth import (ControlSignal, InitialState, assemble_control,
                             moment_targets_alpha0, moment_targets_boundary,
                             moment_targets_pointwise, project_onto_X, spectral_shift,
                             subspace_X_check, synthesize_alpha0, synthesize_boundary,
                             synthesize_pointwise, verify_moments)


def test_spectral_shift_examples():
    p = SystemParams(2, 1, 1)
    M, shifted = spectral_shift(p, compute_spectrum(p, 4))
    assert M == 1 and shifted[(1, 1)] == 1
    q = SystemParams(3, 1, 0)
    assert spectral_shift(q, compute_spectrum(q, 4))[0] == 0


def test_shift_covariance():
    # n=3, alpha=1: every Re(lambda) > 0, so the unshifted problem is well posed too
    p = SystemParams(3, 1, 1, precision=120)
    y0 = InitialState.random(3, range(1, 4), seed=5)
    shifted = synthesize_boundary(p, y0, 3, mp.mpf("0.5"))
    direct = synthesize_boundary(p, y0, 3, mp.mpf("0.5"), shift=0)
    assert shifted.shift > 0 and direct.shift == 0
    assert shifted.report.worst <= 1e-20 and direct.report.worst <= 1e-20


def test_boundary_targets_zero_state():
    p = SystemParams(2, 1, 2)
    t = moment_targets_boundary(p, compute_spectrum(p, 5), InitialState.zero(2), 5)
    assert all(v == 0 for v in t.values()) and len(t) == 10


def test_boundary_targets_invisible_mode():
    p = SystemParams(3, 1, -1)
    spec = compute_spectrum(p, 2)
    y0 = InitialState(3, {1: spec[(1, 1)].V})
    with pytest.raises(NonControllableMode) as exc:
        moment_targets_boundary(p, spec, y0, 2)
    assert (exc.value.j, exc.value.k) == (1, 1)


def test_boundary_targets_quadrature_oracle():
    p = SystemParams(2, 1, 2, precision=40)
    spec = compute_spectrum(p, 1)
    targets = moment_targets_boundary(p, spec, InitialState(2, {1: [1, 0]}), 1)
    with mp.workdps(40):
        w1 = lambda x: mp.sqrt(2 / mp.pi) * mp.sin(x)
        for j in range(2):
            V = spec[(j, 1)].V
            # <y0, Phi> = int_0^pi (e1 w1) . conj(V w1) dx
            pairing = mp.quad(lambda x: w1(x) * mp.conj(V[0]) * w1(x), [0, mp.pi])
            want = -mp.sqrt(mp.pi / 2) * pairing / (mp.conj(V[0]) + mp.conj(V[1]))
            assert abs(targets[(j, 1)] - want) < 1e-12


def test_alpha0_targets_small_case():
    p = SystemParams(2, 1, 0, precision=40)
    M, Mt = moment_targets_alpha0(p, InitialState(2, {1: [0, 1]}), 1, 1, return_tilde=True)
    with mp.workdps(40):
        c = mp.sqrt(mp.pi / 2)
        assert abs(Mt[(0, 1)] + c) < 1e-35 and abs(Mt[(1, 1)] + c) < 1e-35
        brute = mp.lu_solve(mp.matrix([[1, 0], [-1, 1]]), mp.matrix([Mt[(0, 1)], Mt[(1, 1)]]))
        assert abs(M[(0, 1)] - brute[0]) < 1e-35 and abs(M[(1, 1)] - brute[1]) < 1e-35
    zero = moment_targets_alpha0(p, InitialState.zero(2), 3, 1)
    assert all(v == 0 for v in zero.values())


def test_alpha0_targets_match_adjoint_chain():
    p = SystemParams(3, 2, 0, precision=50)
    T = mp.mpf("0.3")
    y0 = InitialState.random(3, [1, 2], seed=9, complex_values=True)
    _, Mt = moment_targets_alpha0(p, y0, 2, T, return_tilde=True)
    with mp.workdps(50):
        for k in (1, 2):
            for j in range(3):
                phi0 = adjoint_solve(p, [(j, k, 1)], T).modal(0)[k]
                pair = mp.fsum(a * mp.conj(b) for a, b in zip(y0.mode(k), phi0))
                want = -mp.sqrt(mp.pi / 2) / k * (-1) ** j * mp.exp(2 * k * k * T) * pair
                assert abs(Mt[(j, k)] - want) < 1e-40 * max(1, abs(want))


def test_pointwise_targets_bound_and_growth():
    p = SystemParams(2, 1, 2, precision=60)
    theta = Surd(-1, 1, 2)
    spec = compute_spectrum(p, 8)
    assert all(v == 0 for v in moment_targets_pointwise(p, spec, InitialState.zero(2), theta,
                                                          8).values())
    y0 = InitialState(2, {k: [0, 1] for k in range(1, 9)}, "L2")
    t = moment_targets_pointwise(p, spec, y0, theta, 8)
    sines = sine_values(theta, 1, 8, dps=60)
    with mp.workdps(60):
        c = mp.sqrt(mp.pi / 2)
        for j in range(2):
            V = spec[(j, 1)].V
            assert abs(t[(j, 1)]) <= c / sines[0] / abs(V[1]) * (1 + 1e-30)
        for k in range(1, 9):
            # y0 = e2 w_k gives <y0,V> = conj(V_2) = V*B, so |target| = c / |sin(k theta pi)|
            assert abs(abs(t[(0, k)]) * sines[k - 1] - c) < 1e-40


def test_subspace_membership():
    assert subspace_X_check(InitialState.zero(2), 2).member
    bad = subspace_X_check(InitialState(2, {2: [1, 0]}), 2)
    assert not bad.member and not bad.conditions["third"]["passed"]
    with mp.workdps(80):
        y = project_onto_X(InitialState.random(2, range(1, 7), seed=1), 2, 1, 80)
        assert subspace_X_check(y, 2).member
        yy = project_onto_X(y, 2, 1, 80)
        assert max(abs(a - b) for k in y.support for a, b in zip(y.mode(k), yy.mode(k))) < 1e-70


def test_assemble_zero_and_single_mode():
    bio = biortho(ExponentFamily([2], 1, 50))
    zero = assemble_control({0: 0}, bio)
    assert zero.norm_L2 == 0 and zero(mp.mpf("0.3")) == 0
    one = assemble_control({0: mp.mpf(3)}, bio)
    with mp.workdps(50):
        assert abs(one.moment(2) - 3 * mp.exp(-2)) < 1e-45
    with pytest.raises(IndexMismatch):
        assemble_control({5: 1}, bio)


def test_boundary_K8_moments():
    p = SystemParams(2, 1, 2, precision=300)
    res = synthesize_boundary(p, InitialState.random(2, range(1, 9), seed=2), 8, mp.mpf("0.5"))
    assert len(res.report.residuals) == 16
    assert res.report.worst <= 1e-30
    assert res.realness_defect <= 1e-20
    assert all(mu.imag == 0 or any(abs(m2 - mp.conj(mu)) < 1e-200 for m2, _, _ in res.control.terms)
               for mu, _, _ in res.control.terms)


def test_verify_moments_zero_and_dropped_term():
    ctrl = ControlSignal(mp.mpf(1), 0, [], None, 50)
    rep = verify_moments(ctrl, [(0, mp.mpf(1), 0)], {0: 0})
    assert rep.max_abs == 0 and rep.max_scaled == 0
    with mp.workdps(80):
        bio = biortho(ExponentFamily([1, 3, 6], 1, 80))
        targets = {0: mp.mpf(2), 1: mp.mpf(-1), 2: mp.mpf("0.5")}
        exps = [(i, z, 0) for i, z in zip(range(3), (1, 3, 6))]
        full = verify_moments(assemble_control(targets, bio), exps, targets)
        assert full.worst < mp.mpf(10) ** -40
        dropped = assemble_control({0: targets[0], 1: 0, 2: targets[2]}, bio)
        rep = verify_moments(dropped, exps, targets)
        assert abs(rep.residuals[1][1] - abs(targets[1])) < 1e-40


def test_linearity_in_initial_state():
    p = SystemParams(2, 1, 3, precision=120)
    a = InitialState.random(2, range(1, 4), seed=1)
    b = InitialState.random(2, range(1, 4), seed=2)
    T = mp.mpf("0.4")
    va = synthesize_boundary(p, a, 3, T).control
    vb = synthesize_boundary(p, b, 3, T).control
    with mp.workdps(120):
        combo = a + b.scale(-2)
    vab = synthesize_boundary(p, combo, 3, T).control
    with mp.workdps(120):
        for t in (0, mp.mpf("0.1"), mp.mpf("0.33")):
            assert abs(vab(t) - (va(t) - 2 * vb(t))) < 1e-20 * max(1, abs(vab(t)))


def test_alpha0_pipeline_unreduced_equations():
    p = SystemParams(2, 1, 0, precision=80)
    y0 = InitialState.random(2, range(1, 4), seed=4)
    T = 1
    res = synthesize_alpha0(p, y0, 3, T)
    _, Mt = moment_targets_alpha0(p, y0, 3, T, return_tilde=True)
    with mp.workdps(80):
        for k in range(1, 4):
            X0, X1 = res.control.moment(k * k, 0), res.control.moment(k * k, 1)
            e = mp.exp(-k * k * T)
            assert abs(X0 - e * Mt[(0, k)]) < 1e-40
            assert abs(-X0 + k * k * X1 - e * Mt[(1, k)]) < 1e-40


def test_pointwise_synthesis_residuals():
    p = SystemParams(2, 1, 2, precision=200)
    y0 = InitialState.random(2, range(1, 5), seed=8, space="L2")
    res = synthesize_pointwise(p, y0, Surd(-1, 1, 2), 4, mp.mpf("0.5"))
    assert res.report.worst <= 1e-30


def test_resonant_incompatibility_reported():
    p = SystemParams(2, 1, 4, precision=100)
    with pytest.raises(IncompatibleInitialState) as exc:
        synthesize_boundary(p, InitialState(2, {2: [1, 0]}), 4, 1)
    assert exc.value.report is not None and not exc.value.report.member


def test_state_and_control_records_round_trip():
    y0 = InitialState.random(2, [1, 3], seed=3, complex_values=True)
    back = InitialState.from_record(y0.to_record())
    assert back.support == y0.support
    with mp.workdps(50):
        assert max(abs(a - b) for k in y0.support for a, b in zip(y0.mode(k), back.mode(k))) < 1e-40
    p = SystemParams(2, 1, 2, precision=60)
    ctrl = synthesize_boundary(p, InitialState.random(2, [1, 2], seed=1), 2, 1).control
    again = ControlSignal.from_record(ctrl.to_record())
    with mp.workdps(60):
        assert abs(again(mp.mpf("0.2")) - ctrl(mp.mpf("0.2"))) < 1e-50
