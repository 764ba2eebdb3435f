"""Spectral solvers: modal forward/adjoint propagation, Galerkin, duality.

Boundary control enters mode k through  z_k' = -(k^2 D + A) z_k + k sqrt(2/pi) D B v(t),
pointwise control through  z_k' = -(k^2 D + A) z_k + sqrt(2/pi) sin(k x0) B u(t).
Per mode, exp(-(k^2 D + A) s) b is written as a finite sum of terms
s^p exp(-z s) vec, which makes every convolution with an exponential-sum
control a closed-form Laplace moment.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import mpmath as mp
import numpy as np
from scipy.integrate import quad_vec, solve_ivp
from scipy.interpolate import CubicSpline

from .arith import Irrational, exact, theta_value
from .errors import QuadratureFailure, UnresolvedControl
from .model import (SystemParams, build_matrices, eigenvalue,
                    modal_change_of_basis, unnormalized_vector, _normalize)
from .moments import laplace_moment
from .synth import ControlSignal, InitialState


# ----- per-mode exponential structure ------------------------------------------

def propagator_terms(params: SystemParams, k: int, b) -> List[Tuple[object, int, list]]:
    """exp(-(k^2 D + A) s) b = sum over (z, p, vec) of s^p e^{-z s} vec."""
    n = params.n
    b = [mp.mpc(x) for x in b]
    if params.alpha_sign == 0:
        d = params.d_mp()
        z = d * k * k
        out, cur = [], list(b)
        for p in range(n):
            coef = (-mp.mpf(k) ** 2) ** p / mp.factorial(p)
            out.append((mp.mpc(z), p, [coef * c for c in cur]))
            cur = cur[1:] + [mp.mpc(0)]        # N applied (upper shift)
        return out
    W, Winv = modal_change_of_basis(params, k)
    c = W.T * mp.matrix(b)
    P = Winv.T
    out = []
    for j in range(n):
        lam = eigenvalue(params, j, k)
        out.append((lam, 0, [P[i, j] * c[j] for i in range(n)]))
    return out


def expm_mode(params: SystemParams, k: int, t) -> mp.matrix:
    """exp(-(k^2 D + A) t) assembled column by column from the closed form."""
    n = params.n
    with mp.workdps(params.precision):
        E = mp.matrix(n, n)
        for col in range(n):
            e = [0] * n
            e[col] = 1
            for z, p, vec in propagator_terms(params, k, e):
                f = mp.mpf(t) ** p * mp.exp(-z * t)
                for i in range(n):
                    E[i, col] += f * vec[i]
    return E


def _free(terms, t):
    n = len(terms[0][2])
    out = [mp.mpc(0)] * n
    for z, p, vec in terms:
        f = (t ** p if p else 1) * mp.exp(-z * t)
        for i in range(n):
            out[i] += f * vec[i]
    return out


def _convolve(terms, control: ControlSignal, t):
    """int_0^t exp(-M (t-s)) g v(s) ds for an exponential-sum control."""
    n = len(terms[0][2])
    out = [mp.mpc(0)] * n
    T = mp.mpf(control.T)
    lag = T - t
    for mu, j, c in control.terms:
        pref = c * mp.exp(-mu * lag)
        for i in range(j + 1):
            w = comb(j, i) * (lag ** (j - i) if j - i else 1)
            if w == 0:
                continue
            for z, p, vec in terms:
                f = pref * w * laplace_moment(p + i, z + mu, t)
                for r in range(n):
                    out[r] += f * vec[r]
    return out


# ----- trajectories -------------------------------------------------------------

@dataclass
class ModalTrajectory:
    t_grid: List
    states: Dict[int, List[List]]
    n: int

    def terminal(self, k: int):
        return self.states[k][-1]

    def norm_hminus1(self, index: int = -1):
        return mp.sqrt(mp.fsum(abs(c) ** 2 / k ** 2 for k, path in self.states.items()
                               for c in path[index]))

    def norm_l2(self, index: int = -1):
        return mp.sqrt(mp.fsum(abs(c) ** 2 for path in self.states.values() for c in path[index]))

    def max_terminal(self, modes: Optional[Sequence[int]] = None):
        modes = self.states.keys() if modes is None else modes
        return max(max(abs(c) for c in self.states[k][-1]) for k in modes)

    def rows(self):
        """(t, k, component, re, im) records."""
        for ti, t in enumerate(self.t_grid):
            for k in sorted(self.states):
                for comp, c in enumerate(self.states[k][ti]):
                    yield (t, k, comp + 1, mp.re(c), mp.im(c))

    def summary(self) -> dict:
        return {"T": mp.nstr(mp.mpf(self.t_grid[-1]), 20),
                "modes": len(self.states),
                "norm_Hminus1_T": mp.nstr(self.norm_hminus1(), 15),
                "norm_L2_T": mp.nstr(self.norm_l2(), 15),
                "max_abs_terminal": mp.nstr(self.max_terminal(), 15)}


def _grid(t_grid, T):
    if t_grid is None:
        return [mp.mpf(0), mp.mpf(T)]
    return [mp.mpf(t) for t in t_grid]


def _simulate_modal(params: SystemParams, y0: InitialState, v, K_max: int, t_grid,
                    source: Callable[[int], list], T) -> ModalTrajectory:
    prec = max(params.precision, getattr(v, "precision", 0) or 0)
    states = {}
    with mp.workdps(prec):
        ts = _grid(t_grid, T)
        mode = _control_mode(v)
        for k in range(1, K_max + 1):
            zero_init = k not in y0.coeffs
            g = source(k)
            free_terms = None if zero_init else _terms_for(params, k, y0.mode(k), prec)
            src_terms = _terms_for(params, k, g, prec)
            path = []
            for t in ts:
                z = [mp.mpc(0)] * params.n if zero_init else _free(free_terms, t)
                if t > 0 and mode != "zero":
                    if mode == "analytic":
                        add = _convolve(src_terms, v, t)
                    else:
                        add = _quadrature(src_terms, v, t)
                    z = [a + b for a, b in zip(z, add)]
                path.append(z)
            states[k] = path
    return ModalTrajectory(ts, states, params.n)


def _terms_for(params, k, b, prec):
    p = SystemParams(params.n, params.d, params.alpha, max(params.precision, prec))
    return propagator_terms(p, k, b)


def _control_mode(v) -> str:
    if v is None:
        return "zero"
    if isinstance(v, ControlSignal):
        if v.terms:
            return "analytic"
        if v.samples is not None:
            return "sampled"
        return "zero"
    if callable(v):
        return "callable"
    raise TypeError("control must be a ControlSignal, a callable or None")


def _quadrature(terms, v, t, tol: float = 1e-12):
    """Double-precision adaptive quadrature of the Duhamel integral."""
    zs = np.array([complex(z) for z, _, _ in terms])
    ps = np.array([p for _, p, _ in terms])
    vecs = np.array([[complex(c) for c in vec] for _, _, vec in terms])
    tf = float(t)
    f = _as_callable(v, tf)

    def integrand(s):
        sig = tf - s
        w = sig ** ps * np.exp(-zs * sig)
        return (w[:, None] * vecs).sum(axis=0) * f(s)

    val, err = quad_vec(integrand, 0.0, tf, epsabs=tol, epsrel=tol, limit=2000)
    if err > 1e-10 * (1 + np.abs(val).max()):
        raise UnresolvedControl(f"quadrature error estimate {err:.2e} at t = {tf}")
    return [mp.mpc(c) for c in val]


def _as_callable(v, tf):
    if isinstance(v, ControlSignal):
        ts = np.array([float(x) for x in v.samples[0]])
        vs = np.array([complex(x) for x in v.samples[1]])
        fine = _spline(ts, vs)
        coarse = _spline(ts[::2], vs[::2])
        probe = np.linspace(ts[0], ts[-1], 4 * len(ts))
        gap = np.abs(fine(probe) - coarse(probe)).max()
        if gap > 1e-6 * (1 + np.abs(vs).max()):
            raise UnresolvedControl(
                f"sampled control under-resolved (refinement gap {gap:.2e})")
        return fine
    return lambda s: complex(v(s))


def _spline(ts, vs):
    re, im = CubicSpline(ts, vs.real), CubicSpline(ts, vs.imag)
    return lambda s: re(s) + 1j * im(s)


def boundary_source(params: SystemParams):
    def g(k):
        mats = build_matrices(params)
        DB = mats.D * mats.B
        pref = k * mp.sqrt(2 / mp.pi)
        return [pref * DB[i] for i in range(params.n)]
    return g


def pointwise_source(params: SystemParams, theta):
    def g(k):
        th = theta_value(theta, mp.mp.dps + 10)
        s = mp.sinpi(k * th - mp.floor(k * th))
        out = [mp.mpc(0)] * params.n
        out[-1] = mp.sqrt(2 / mp.pi) * s
        return out
    return g


def simulate_boundary(params: SystemParams, y0: InitialState, v, K_max: int,
                      t_grid=None, T=None) -> ModalTrajectory:
    """Exact modal solution under Dirichlet boundary control y(t,0) = B v(t)."""
    T = T if T is not None else (v.T if isinstance(v, ControlSignal) else None)
    if T is None and t_grid is None:
        raise ValueError("give T or a time grid")
    return _simulate_modal(params, y0, v, K_max, t_grid, boundary_source(params),
                           T if T is not None else t_grid[-1])


def simulate_pointwise(params: SystemParams, y0: InitialState, u, theta, K_max: int,
                       t_grid=None, T=None) -> ModalTrajectory:
    """Exact modal solution under a point control at x0 = theta*pi."""
    T = T if T is not None else (u.T if isinstance(u, ControlSignal) else None)
    return _simulate_modal(params, y0, u, K_max, t_grid, pointwise_source(params, theta),
                           T if T is not None else t_grid[-1])


# ----- adjoint and duality ------------------------------------------------------

@dataclass
class AdjointTrajectory:
    params: SystemParams
    T: object
    # per mode k: list of (coef, z, p, vec) with phihat_k(t) = sum coef e^{-z(T-t)} (T-t)^p vec
    modes: Dict[int, List[Tuple[object, object, int, list]]]

    def modal(self, t) -> Dict[int, list]:
        out = {}
        with mp.workdps(self.params.precision):
            lag = mp.mpf(self.T) - t
            for k, terms in self.modes.items():
                acc = [mp.mpc(0)] * self.params.n
                for coef, z, p, vec in terms:
                    f = coef * mp.exp(-z * lag) * (lag ** p if p else 1)
                    acc = [a + f * b for a, b in zip(acc, vec)]
                out[k] = acc
        return out

    def dx0(self, t) -> list:
        """d/dx phi(t, 0) = sum_k k sqrt(2/pi) phihat_k(t)."""
        tot = [mp.mpc(0)] * self.params.n
        with mp.workdps(self.params.precision):
            for k, vec in self.modal(t).items():
                tot = [a + k * mp.sqrt(2 / mp.pi) * b for a, b in zip(tot, vec)]
        return tot


def adjoint_solve(params: SystemParams, phiT: Sequence[Tuple[int, int, object]], T) -> AdjointTrajectory:
    """phi(t) for -phi_t - D^T phi_xx + A^T phi = 0 with phi(T) = sum coef Phi_{j,k}.

    For alpha != 0, Phi_{j,k} = V_{j,k} w_k.  For alpha = 0, index j selects
    the chain element e_{n-j} w_k (j = 0 is the eigenvector e_n w_k).
    """
    n = params.n
    modes: Dict[int, list] = {}
    with mp.workdps(params.precision):
        for j, k, coef in phiT:
            coef = mp.mpc(coef)
            if params.alpha_sign != 0:
                lam = eigenvalue(params, j, k)
                V = _normalize(unnormalized_vector(params, j, k))
                modes.setdefault(k, []).append((coef, lam, 0, V))
            else:
                z = params.d_mp() * k * k
                for l in range(j + 1):
                    vec = [mp.mpc(0)] * n
                    vec[n - 1 - l] = ((-1) ** (j - l) * mp.mpf(k) ** (2 * (j - l))
                                      / mp.factorial(j - l))
                    modes.setdefault(k, []).append((coef, mp.mpc(z), j - l, vec))
    return AdjointTrajectory(params, mp.mpf(T), modes)


def _pairing(u: Dict[int, list], phi: Dict[int, list], flip: bool):
    tot = mp.mpc(0)
    for k, vec in phi.items():
        y = u.get(k)
        if y is None:
            continue
        for a, b in zip(y, vec):
            tot += mp.conj(a) * b if flip else a * mp.conj(b)
    return tot


def duality_residual(params: SystemParams, y0: InitialState, v: ControlSignal,
                     phiT, flip: bool = False):
    """|<y(T),phi^T> - <y0,phi(0)> - int_0^T (v, B*D*phi_x(t,0)) dt|.

    ``flip`` moves the conjugation of the state pairings to the first slot
    (negative control for the convention).
    """
    T = mp.mpf(v.T)
    adj = adjoint_solve(params, phiT, T)
    K = max(list(adj.modes) + y0.support)
    prec = max(params.precision, v.precision)
    with mp.workdps(prec):
        traj = simulate_boundary(params, y0, v, K, t_grid=[0, T], T=T)
        yT = {k: path[-1] for k, path in traj.states.items()}
        lhs = _pairing(yT, adj.modal(T), flip) - _pairing(y0.coeffs, adj.modal(mp.mpf(0)), flip)
        d = params.d_mp()
        rhs = mp.mpc(0)
        for k, terms in adj.modes.items():
            pref = k * mp.sqrt(2 / mp.pi)
            for coef, z, p, vec in terms:
                bdv = vec[-2] + d * vec[-1]
                g = mp.conj(pref * coef * bdv)
                for mu, j, c in v.terms:
                    rhs += c * g * laplace_moment(j + p, mu + mp.conj(z), T)
        return abs(lhs - rhs)


# ----- distributed Galerkin -------------------------------------------------------

@dataclass
class PotentialSystem:
    """y_t - D y_xx + q(x) A0 y = B 1_omega u with n = 2, d = 1, A0 = e1 e1^T."""
    q: Callable[[np.ndarray], np.ndarray]
    omega: Tuple[float, float]
    seams: Sequence[float] = ()


def omega_matrix(K: int, omega: Tuple[float, float]) -> np.ndarray:
    """Omega[k,m] = int_omega w_k w_m dx in closed form."""
    a, b = omega
    ks = np.arange(1, K + 1)
    k, m = np.meshgrid(ks, ks, indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore"):
        dif = np.where(k != m, (np.sin((k - m) * b) - np.sin((k - m) * a)) / np.where(k != m, k - m, 1),
                       b - a)
    summ = (np.sin((k + m) * b) - np.sin((k + m) * a)) / (k + m)
    return (dif - summ) / np.pi


def potential_matrix(q: Callable, K: int, seams: Sequence[float] = (), panels: int = 256,
                     order: int = 24, tol: float = 1e-12) -> np.ndarray:
    """Q[k,m] = int_0^pi q w_k w_m dx by composite Gauss-Legendre, checked by refinement."""
    def assemble(npan):
        cuts = sorted(set([0.0, np.pi] + [s for s in seams if 0 < s < np.pi]))
        nodes, weights = np.polynomial.legendre.leggauss(order)
        xs, ws = [], []
        for a, b in zip(cuts[:-1], cuts[1:]):
            edges = np.linspace(a, b, max(2, int(np.ceil(npan * (b - a) / np.pi)) + 1))
            for lo, hi in zip(edges[:-1], edges[1:]):
                xs.append(0.5 * (hi - lo) * nodes + 0.5 * (hi + lo))
                ws.append(0.5 * (hi - lo) * weights)
        x, w = np.concatenate(xs), np.concatenate(ws)
        S = np.sqrt(2 / np.pi) * np.sin(np.outer(np.arange(1, K + 1), x))
        return (S * (w * q(x))) @ S.T
    Q1, Q2 = assemble(panels), assemble(2 * panels)
    gap = np.abs(Q1 - Q2).max()
    if gap > tol * max(1.0, np.abs(Q2).max()):
        raise QuadratureFailure(f"potential matrix not converged (gap {gap:.2e})")
    return Q2


def sine_coefficients(f: Callable, K: int, seams: Sequence[float] = (), panels: int = 256,
                      order: int = 20) -> np.ndarray:
    """(f, w_k) for k = 1..K by composite Gauss-Legendre aligned to the seams."""
    cuts = sorted(set([0.0, np.pi] + [s for s in seams if 0 < s < np.pi]))
    nodes, weights = np.polynomial.legendre.leggauss(order)
    xs, ws = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        edges = np.linspace(a, b, max(2, int(np.ceil(panels * (b - a) / np.pi)) + 1))
        for lo, hi in zip(edges[:-1], edges[1:]):
            xs.append(0.5 * (hi - lo) * nodes + 0.5 * (hi + lo))
            ws.append(0.5 * (hi - lo) * weights)
    x, w = np.concatenate(xs), np.concatenate(ws)
    S = np.sqrt(2 / np.pi) * np.sin(np.outer(np.arange(1, K + 1), x))
    return S @ (w * f(x))


def state_from_functions(funcs: Sequence[Callable], K: int, seams: Sequence[float] = ()) -> InitialState:
    """L2 initial state whose k-th coefficients are the sine coefficients of ``funcs``."""
    cols = [sine_coefficients(f, K, seams) for f in funcs]
    return InitialState(len(funcs), {k: [float(c[k - 1]) for c in cols] for k in range(1, K + 1)},
                        "L2")


def simulate_distributed(system, y0: InitialState, u=None, K_max: int = 32, t_grid=None,
                         rtol: float = 1e-10, atol: float = 1e-12) -> ModalTrajectory:
    """Galerkin sine-basis solution of the distributed-control system.

    ``system`` is a SystemParams (constant coupling, control on all of (0,pi)
    unless an ``omega`` attribute is set) or a PotentialSystem.  ``u`` maps t
    to the K_max sine coefficients of the control (None for no control).
    """
    K = K_max
    lam = np.diag(np.arange(1, K + 1, dtype=float) ** 2)
    if isinstance(system, PotentialSystem):
        n = 2
        D = np.array([[1.0, 1.0], [0.0, 1.0]])
        Aconst = np.zeros((2, 2))
        A0 = np.array([[1.0, 0.0], [0.0, 0.0]])
        Q = potential_matrix(system.q, K, system.seams)
        Om = omega_matrix(K, system.omega)
    else:
        n = system.n
        mats = build_matrices(system)
        D = np.array(mats.D.tolist(), dtype=float)
        Aconst = np.array(mats.A.tolist(), dtype=float)
        A0 = np.zeros((n, n))
        Q = np.zeros((K, K))
        Om = omega_matrix(K, getattr(system, "omega", (0.0, np.pi)))
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    L = -(np.kron(D, lam) + np.kron(Aconst, np.eye(K)) + np.kron(A0, Q))
    S = np.kron(B, Om)
    Y0 = np.zeros(n * K)
    for k, vec in y0.coeffs.items():
        if k <= K:
            for i in range(n):
                Y0[i * K + k - 1] = float(mp.re(vec[i]))

    def rhs(t, Y):
        out = L @ Y
        if u is not None:
            out = out + S @ np.asarray(u(t), dtype=float)
        return out

    ts = np.array([0.0, 1.0] if t_grid is None else [float(t) for t in t_grid])
    sol = solve_ivp(rhs, (ts[0], ts[-1]), Y0, method="Radau", t_eval=ts, jac=L,
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    states = {k: [[complex(sol.y[i * K + k - 1, ti]) for i in range(n)] for ti in range(len(ts))]
              for k in range(1, K + 1)}
    return ModalTrajectory(list(ts), states, n)


# ----- pointwise observability quotient -------------------------------------------

def _small_sine(theta, k: int, dps: int):
    """sin(k theta pi) with enough digits that tiny values keep relative accuracy."""
    while True:
        with mp.workdps(dps):
            th = theta_value(theta, dps)
            s = mp.sinpi(k * th - mp.floor(k * th))
            if s != 0 and -mp.log10(abs(s)) < dps - 25:
                return +s
        dps *= 2
        if dps > 100_000:
            return mp.mpf(0)

def observability_ratio(params: SystemParams, x0, k: int, T):
    """|V|^2 e^{-2 Re(l) T} / [(2/pi)|B*V|^2 (1 - e^{-2 Re(l) T})/(2 Re(l)) sin^2(k x0)]
    for the eigenfunction V_{0,k} w_k; +inf when the sine vanishes.

    ``x0`` is x0/pi given as a rational, an Irrational or an mpf.
    """
    dps = params.precision + 2 * len(str(k)) + 20
    with mp.workdps(dps):
        r = exact(x0) if not isinstance(x0, Irrational) else None
        if r is not None:
            kr = k * r
            if kr.denominator == 1:
                return mp.inf
            s = mp.sinpi(mp.mpf(kr.numerator % (2 * kr.denominator)) / kr.denominator)
        else:
            s = _small_sine(x0, k, dps)
        if s == 0:
            return mp.inf
        lam = eigenvalue(params, 0, k)
        V = (_normalize(unnormalized_vector(params, 0, k)) if params.alpha_sign != 0
             else [0] * (params.n - 1) + [1])
        a = mp.re(lam)
        T = mp.mpf(T)
        lhs = mp.fsum(abs(c) ** 2 for c in V) * mp.exp(-2 * a * T)
        window = -mp.expm1(-2 * a * T) / (2 * a) if a != 0 else T
        rhs = (2 / mp.pi) * abs(V[-1]) ** 2 * window * s ** 2
        return lhs / rhs
