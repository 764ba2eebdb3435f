"""Controllability verdicts with witnesses and finite-range certificates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Tuple

import mpmath as mp
import numpy as np

from .arith import (ContinuedFraction, Irrational, digits_for_range, exact,
                    positive_integer_test, to_mpf)
from .errors import (AlphaZero, InsufficientPrecision, ResidualTooLarge,
                     X0OutOfRange)
from .model import (SystemParams, Spectrum, compute_spectrum,
                    kalman_matrix, resonance_index)

SETTINGS = ("BoundaryNull", "BoundaryApprox", "DistributedConstant",
            "PointwiseApprox", "PointwiseNull")


@dataclass
class Verdict:
    setting: str
    outcome: str                     # Controllable | NotControllable | Resonant | Undetermined
    checked_range: int
    witnesses: List[dict] = field(default_factory=list)
    certificates: List[dict] = field(default_factory=list)
    m: Optional[int] = None
    reason: Optional[str] = None

    def __post_init__(self):
        if self.outcome == "NotControllable" and not self.witnesses:
            raise ValueError("NotControllable needs a witness")

    @property
    def negative(self) -> bool:
        return self.outcome == "NotControllable"

    def certificate(self, name: str):
        for c in self.certificates:
            if c["name"] == name:
                return c["value"]
        raise KeyError(name)

    def outcome_label(self) -> str:
        if self.outcome == "Resonant":
            return f"Resonant(m={self.m})"
        if self.outcome == "Undetermined":
            return f"Undetermined({self.reason})"
        return self.outcome

    def to_record(self) -> dict:
        return {
            "setting": self.setting,
            "outcome": self.outcome_label(),
            "witness": self.witnesses,
            "checked_range": self.checked_range,
            "certificates": self.certificates,
        }


def _cert(name: str, value) -> dict:
    if isinstance(value, (mp.mpf, mp.mpc, float, Fraction)):
        value = str(value)
    return {"name": name, "value": value}


def _lam_str(z) -> str:
    z = mp.mpc(z)
    if z.imag == 0:
        return mp.nstr(z.real, 20)
    return mp.nstr(z, 20)


def _collision_witness(spec: Spectrum, pair) -> dict:
    a, b = pair
    return {"kind": "collision", "pair": [list(a), list(b)],
            "lambda": _lam_str(spec[a].lam)}


def _unique_collisions(spec: Spectrum):
    return [p for p in spec.collisions if p[0] < p[1]]


def vanishing_ratio(params: SystemParams):
    """|alpha| / d^n, the square of the unique k that can kill B*D*V."""
    a, d = params.alpha_exact, params.d_exact
    if a is not None and d is not None:
        return abs(a) / d ** params.n
    with mp.workdps(params.precision):
        return abs(params.alpha_mp()) / params.d_mp() ** params.n


def bdv_branch(params: SystemParams) -> Optional[int]:
    """Branch j on which B*D*V can vanish (needs exp(-i theta_j) = -1)."""
    n, s = params.n, params.alpha_sign
    if s > 0 and n % 2 == 0:
        return n // 2
    if s < 0 and n % 2 == 1:
        return (n - 1) // 2
    return None


def bdv_value(params: SystemParams, pair) -> mp.mpc:
    """B*D*V = V_{n-1} + d V_n (last row of D^T applied to V)."""
    with mp.workdps(params.precision):
        return pair.V[-2] + params.d_mp() * pair.V[-1]


def check_BDV(params: SystemParams, spectrum: Spectrum):
    """Indices (j,k) in range with B*D*V_{j,k} = 0.

    Closed form: 1 + d r_{j,k} = 0 with r = alpha^{-1/n} k^{2/n} e^{-i theta_j},
    i.e. branch ``bdv_branch`` and k^2 = |alpha|/d^n.  The numeric value of
    |B*D*V| is cross-checked on every pair.
    """
    if params.alpha_sign == 0:
        raise AlphaZero("B*D*V test is for alpha != 0")
    j0 = bdv_branch(params)
    hits = []
    if j0 is not None:
        ok, K = positive_integer_test(vanishing_ratio(params))
        if ok and K <= spectrum.k_max:
            hits.append((j0, K))
    tol = mp.mpf(10) ** (-(params.precision - 10))
    numeric = [(p.j, p.k) for p in spectrum if abs(bdv_value(params, p)) <= tol]
    exact_inputs = params.is_exact
    if exact_inputs and sorted(numeric) != sorted(hits):
        raise AssertionError(f"closed form {hits} disagrees with numeric {numeric}")
    if not exact_inputs:
        hits = sorted(set(hits) | set(numeric))
    return hits


def shift_delta(spec: Spectrum):
    """Shift M = max(0, 1 - min Re lambda) and delta = min Re/|.| after shift."""
    with mp.workdps(spec.params.precision):
        lo = min(p.lam.real for p in spec)
        M = max(mp.mpf(0), 1 - lo)
        delta = min((p.lam.real + M) / abs(p.lam + M) for p in spec)
    return M, delta


def check_boundary(params: SystemParams, k_max: int = 50,
                   setting: str = "BoundaryNull") -> Verdict:
    n, s = params.n, params.alpha_sign
    if s == 0:
        return Verdict(setting, "Controllable", k_max, certificates=[
            _cert("jordan_chain", "single eigenvalue d k^2 of geometric multiplicity 1"),
            _cert("range_certified", True)])
    spec = compute_spectrum(params, k_max)
    collisions = _unique_collisions(spec)
    bdv = check_BDV(params, spec)
    M, delta = shift_delta(spec)
    certs = [_cert("collisions_checked_up_to", k_max),
             _cert("collision_count", len(collisions)),
             _cert("shift", mp.nstr(M, 20)),
             _cert("delta", mp.nstr(delta, 20)),
             _cert("range_certified", True)]
    j0 = bdv_branch(params)
    if j0 is not None:
        ratio = vanishing_ratio(params)
        ok, K = positive_integer_test(ratio)
        certs.append(_cert("vanishing_ratio_sq", ratio if isinstance(ratio, Fraction)
                           else mp.nstr(ratio, 20)))
        certs.append(_cert("vanishing_test", {True: "in N*", False: "not in N*",
                                              None: "tolerance band"}[ok]))
    else:
        ok, K = False, None
    bdv_w = [{"kind": "vanishing_BDV", "j": j, "k": k} for j, k in bdv]
    col_w = [_collision_witness(spec, c) for c in collisions]

    if n == 2 and s > 0:
        m = resonance_index(params)
        sq = (params.alpha_exact / params.d_exact ** 2 if params.is_exact
              else None)
        if m is not None:
            return Verdict(setting, "Resonant", k_max, col_w + bdv_w, certs, m=m)
        if sq is None:
            with mp.workdps(params.precision):
                test, mm = positive_integer_test(params.alpha_mp() / params.d_mp() ** 2)
            if test is None:
                return Verdict(setting, "Undetermined", k_max, col_w, certs,
                               reason=f"sqrt(alpha)/d within 1e-12 of {mm}")
        if collisions:
            return Verdict(setting, "NotControllable", k_max, col_w, certs)
        return Verdict(setting, "Controllable", k_max, [], certs)

    if s > 0 and n % 2 == 0:
        if ok:
            return Verdict(setting, "NotControllable", k_max, bdv_w
                           or [{"kind": "vanishing_BDV", "j": j0, "k": K}], certs)
        return Verdict(setting, "Undetermined", k_max, col_w, certs,
                       reason="minimal-time regime for even n and alpha > 0")
    if ok is None:
        return Verdict(setting, "Undetermined", k_max, col_w, certs,
                       reason=f"sqrt|alpha|/d^(n/2) within 1e-12 of {K}")
    if ok:
        w = bdv_w or [{"kind": "vanishing_BDV", "j": j0, "k": K}]
        w = w + [{"kind": "rational_point", "sqrt_ratio": K}]
        return Verdict(setting, "NotControllable", k_max, w + col_w, certs)
    if collisions:
        return Verdict(setting, "NotControllable", k_max, col_w, certs)
    return Verdict(setting, "Controllable", k_max, [], certs)


def check_distributed(params: SystemParams, k_max: int = 50) -> Verdict:
    """Constant-coefficient distributed control: Kalman rank for every mode."""
    worst = None
    for k in range(1, k_max + 1):
        res = kalman_matrix(params, k)
        if res.rank < params.n:
            return Verdict("DistributedConstant", "NotControllable", k_max,
                           [{"kind": "kalman_rank", "k": k, "rank": res.rank}])
        worst = res.abs_det if worst is None else min(worst, res.abs_det)
    return Verdict("DistributedConstant", "Controllable", k_max, certificates=[
        _cert("kalman_rank_all_modes", params.n), _cert("min_abs_det", mp.nstr(worst, 20)),
        _cert("range_certified", True)])


@dataclass
class GapCertificate:
    rho: float
    k_start: Optional[int]
    violations: List[Tuple[Tuple[int, int], Tuple[int, int]]]


def check_gap(params: SystemParams, k_max: int) -> GapCertificate:
    """Exhaustive pairwise scan of |l - l'| / |l|^{1/2}.

    Violations are exact collisions plus, for even n and alpha > 0, pairs
    involving the two real branches (0, n/2) whose normalized gap falls below
    the minimum over all other pairs.  For n = 2 the cross-branch gap is
    explicit (bounded below unless sqrt(alpha)/d is an integer), so only
    collisions count there.
    """
    if params.alpha_sign == 0:
        raise AlphaZero("gap certificate is for alpha != 0")
    spec = compute_spectrum(params, k_max)
    idx = list(spec.pairs.keys())
    lam = np.array([complex(spec[i].lam) for i in idx])
    N = len(idx)
    diff = np.abs(lam[:, None] - lam[None, :])
    scale = np.sqrt(np.maximum(np.abs(lam), 1e-300))[:, None]
    ratio = diff / scale
    np.fill_diagonal(ratio, np.inf)
    pos = {ix: t for t, ix in enumerate(idx)}
    bad = np.zeros((N, N), dtype=bool)
    violations = set()
    for a, b in spec.collisions:
        bad[pos[a], pos[b]] = bad[pos[b], pos[a]] = True
        violations.add(tuple(sorted((a, b))))
    if params.alpha_sign > 0 and params.n % 2 == 0 and params.n >= 4:
        p = params.n // 2
        js = np.array([i[0] for i in idx])
        real_pair = (((js[:, None] == 0) & (js[None, :] == p))
                     | ((js[:, None] == p) & (js[None, :] == 0)))
        others = np.where(real_pair | bad, np.inf, ratio)
        floor = others.min() if np.isfinite(others).any() else np.inf
        flagged = real_pair & ~bad & (ratio < floor)
        for a, b in zip(*np.nonzero(flagged)):
            bad[a, b] = bad[b, a] = True
            violations.add(tuple(sorted((idx[a], idx[b]))))
    violations = sorted(violations, key=lambda v: (v[0][1], v[0][0], v[1][1], v[1][0]))
    if violations:
        k_start = 1 + max(max(a[1], b[1]) for a, b in violations)
    else:
        k_start = 1
    if k_start > k_max:
        k_start = None
        valid = ~bad
    else:
        ks = np.array([i[1] for i in idx])
        valid = ~bad & (ks[:, None] >= k_start) & (ks[None, :] >= k_start)
    np.fill_diagonal(valid, False)
    rho = float(ratio[valid].min()) if valid.any() else float("inf")
    return GapCertificate(rho, k_start, violations)


def _x0_theta(x0_spec):
    if isinstance(x0_spec, Irrational):
        return None, x0_spec
    q = exact(x0_spec)
    if q is None:
        raise TypeError("x0 must be given as a rational r (x0 = r*pi) or an Irrational")
    if not 0 < q < 1:
        raise X0OutOfRange(f"x0/pi = {q} is not in (0,1)")
    return q, None


def check_pointwise(params: SystemParams, x0_spec, k_max: int = 50,
                    T: Optional[float] = None) -> Verdict:
    """Approximate (or, with T, null) controllability from x0 = theta*pi."""
    r, theta = _x0_theta(x0_spec)
    setting = "PointwiseApprox" if T is None else "PointwiseNull"
    witnesses, certs = [], [_cert("checked_range", k_max), _cert("range_certified", True)]
    spec = compute_spectrum(params, k_max)
    collisions = _unique_collisions(spec)
    if r is not None:
        witnesses.append({"kind": "rational_x0", "x0_over_pi": str(r), "k": r.denominator})
    witnesses += [_collision_witness(spec, c) for c in collisions]
    if witnesses:
        return Verdict(setting, "NotControllable", k_max, witnesses, certs)
    if T is None:
        return Verdict(setting, "Controllable", k_max, [], certs)
    est = estimate_T_theta(theta, params.d, k_max)
    certs.append(_cert("T_theta_range_max", mp.nstr(est.running_max, 20)))
    tail = tail_T_theta(theta, params.d, k_max)
    certs.append(_cert("T_theta_tail_estimate", mp.nstr(tail, 20)))
    if T > tail:
        return Verdict(setting, "Controllable", k_max, [], certs)
    if T < tail:
        return Verdict(setting, "Undetermined", k_max, [], certs,
                       reason="T below the finite-range T_theta estimate")
    return Verdict(setting, "Undetermined", k_max, [], certs, reason="T = T_theta")


@dataclass
class TThetaResult:
    running_max: mp.mpf
    argmax_k: int
    trace: List[Tuple[int, mp.mpf]]


def _k_bounds(k_range) -> Tuple[int, int]:
    if isinstance(k_range, int):
        return 1, k_range
    lo, hi = k_range
    return int(lo), int(hi)


def _theta_digits(theta, needed: int):
    if isinstance(theta, Irrational):
        return theta.value(needed)
    if isinstance(theta, str):
        digits = len(theta.strip().lstrip("+-").split(".")[-1])
        if digits < needed:
            raise InsufficientPrecision(
                f"theta carries {digits} digits, at least {needed} are needed")
        with mp.workdps(needed + 5):
            return mp.mpf(theta)
    if isinstance(theta, mp.mpf):
        digits = int(theta.context.prec * math.log10(2))
        if digits < needed:
            raise InsufficientPrecision(
                f"theta carries {digits} digits, at least {needed} are needed")
        return theta
    raise InsufficientPrecision("theta must be an Irrational, a digit string or an mpf")


def sine_values(theta, k_lo: int, k_hi: int, dps: Optional[int] = None):
    """|sin(k theta pi)| for k in [k_lo, k_hi] at the digit budget."""
    need = digits_for_range(k_hi) if dps is None else dps
    th = _theta_digits(theta, need)
    out = []
    with mp.workdps(need):
        for k in range(k_lo, k_hi + 1):
            x = k * th
            out.append(abs(mp.sinpi(x - mp.floor(x))))
    return out


def estimate_T_theta(theta, d, k_range) -> TThetaResult:
    """max_k -log|sin(k theta pi)|/(d k^2) over the range, with the trace."""
    lo, hi = _k_bounds(k_range)
    need = digits_for_range(hi)
    sines = sine_values(theta, lo, hi, need)
    best, arg, trace = mp.mpf(-1), lo, []
    with mp.workdps(need):
        dd = to_mpf(d)
        for k, s in zip(range(lo, hi + 1), sines):
            v = -mp.log(s) / (dd * k * k)
            if v > best:
                best, arg = v, k
                trace.append((k, v))
    return TThetaResult(best, arg, trace)


def tail_T_theta(theta, d, k_max: int):
    """limsup proxy: maximum over the last dyadic block (k_max/2, k_max]."""
    return estimate_T_theta(theta, d, (max(1, k_max // 2 + 1), k_max)).running_max


def dyadic_block_maxima(theta, d, starts: Sequence[int]):
    return [estimate_T_theta(theta, d, (K, 2 * K)).running_max for K in starts]


def liouville_theta(tau: float, d=1, designed_terms: int = 5,
                    first: int = 1) -> ContinuedFraction:
    """Continued fraction whose first terms force |sin(q_n theta pi)| ~ e^{-tau d q_n^2}.

    a_1 = ``first`` and a_{i+1} = max(2, ceil(exp(tau d q_i^2))) for
    i < ``designed_terms``; afterwards all partial quotients are 1, so the
    expansion is infinite (theta irrational).
    """
    def rule(i, p, q):
        if i == 1:
            return first
        if i <= designed_terms:
            with mp.workdps(30):
                return max(2, int(mp.ceil(mp.exp(mp.mpf(tau) * d * q * q))))
        return 1
    return ContinuedFraction(rule, label=f"liouville(tau={tau}, d={d}, terms={designed_terms})")


@dataclass
class WitnessReport:
    passed: bool
    max_residual_psi: float
    max_residual_phi: float
    max_phi_on_omega: float
    boundary: float
    failures: List[dict]

    def raise_for_failure(self):
        if not self.passed:
            f = self.failures[0]
            raise ResidualTooLarge(f"{f['check']} = {f['value']:.3e} at x = {f['x']:.6f}",
                                   location=f["x"])


def _fd_second(f: Callable, x: np.ndarray, h: float) -> np.ndarray:
    """Sixth-order central second difference."""
    c = [1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90]
    return sum(ci * f(x + (i - 3) * h) for i, ci in enumerate(c)) / h ** 2


def fattorini_witness_distributed(q: Callable, omega: Tuple[float, float], candidate,
                                  grid: int = 10_000, tol: float = 1e-6,
                                  omega_tol: float = 1e-10) -> WitnessReport:
    """Check -psi'' + q psi = lam psi, -phi'' - psi'' = lam phi, phi = 0 on omega.

    ``candidate`` is ``(psi, phi, lam)`` with vectorized callables; second
    derivatives are taken by high-order central differences, skipping stencils
    that straddle a declared seam (attribute ``seams``).
    """
    psi, phi, lam = candidate
    x = np.linspace(0.0, np.pi, grid)
    h = np.pi / (grid - 1) / 4
    seams = sorted(set(getattr(psi, "seams", [])) | set(getattr(phi, "seams", []))
                   | set(getattr(q, "seams", [])))
    mask = (x > 4 * h) & (x < np.pi - 4 * h)
    for s in seams:
        mask &= np.abs(x - s) > 4 * h
    xs = x[mask]
    p0 = psi(xs)
    f0 = phi(xs)
    psi_xx = _fd_second(psi, xs, h)
    phi_xx = _fd_second(phi, xs, h)
    r1 = np.abs(-psi_xx + q(xs) * p0 - lam * p0)
    r2 = np.abs(-phi_xx - psi_xx - lam * f0)
    failures = []
    if r1.max() > tol:
        i = int(r1.argmax())
        failures.append({"check": "psi_equation", "value": float(r1[i]), "x": float(xs[i])})
    if r2.max() > tol:
        i = int(r2.argmax())
        failures.append({"check": "phi_equation", "value": float(r2[i]), "x": float(xs[i])})
    a, b = omega
    xo = np.linspace(a, b, 2001)
    fo = np.abs(phi(xo))
    if fo.max() > omega_tol:
        i = int(fo.argmax())
        failures.append({"check": "phi_on_omega", "value": float(fo[i]), "x": float(xo[i])})
    ends = np.array([0.0, np.pi])
    bvals = np.concatenate([np.abs(psi(ends)), np.abs(phi(ends))])
    if bvals.max() > omega_tol:
        failures.append({"check": "boundary", "value": float(bvals.max()), "x": 0.0})
    nontrivial = min(np.sqrt(np.mean(psi(x) ** 2)), np.sqrt(np.mean(phi(x) ** 2)))
    if nontrivial < 1e-2:
        failures.append({"check": "nontrivial", "value": float(nontrivial), "x": 0.0})
    return WitnessReport(not failures, float(r1.max()), float(r2.max()), float(fo.max()),
                         float(bvals.max()), failures)
