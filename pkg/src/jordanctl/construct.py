"""Explicit potential q with a nonzero adjoint eigenfunction invisible on omega.

We build psi (a perturbation of sin 2x that is affine on omega), then

    q   = (psi'' + 36 psi) / psi,
    phi = (tau + psi'(0)/6 + 6 Ic(x)) sin 6x - 6 Is(x) cos 6x - psi,

with Ic(x) = int_0^x cos(6y) psi, Is(x) = int_0^x sin(6y) psi.  The phi
formula is the variation-of-parameters solution of -phi'' - psi'' = 36 phi
with psi'' integrated by parts twice, so only integrals of psi are needed.
Then -psi'' + q psi = 36 psi, phi vanishes on omega once C1 and tau are
fixed, and phi(pi) = 0 once C2 is fixed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import sympy as sp

from .criteria import WitnessReport, fattorini_witness_distributed
from .errors import EpsilonTooLarge, ExtraZero, SignViolation

PI = np.pi
OMEGA = (5 * PI / 12, 7 * PI / 12)
BUMP_LEFT = (PI / 24, 3 * PI / 24)
BUMP_RIGHT = (21 * PI / 24, 23 * PI / 24)
MAX_ORDER = 4

_x = sp.Symbol("x", real=True)


# ----- piecewise functions ---------------------------------------------------------

@dataclass
class Piece:
    a: float
    b: float
    derivs: List[Callable]          # orders 0..len-1, vectorized


class PiecewiseSmoothFn:
    """Vectorized piecewise function on [0, pi] with derivatives up to order 4."""

    def __init__(self, pieces: Sequence[Piece], name: str = "f", seams: Sequence[float] = ()):
        self.pieces = list(pieces)
        self.name = name
        inner = [p.b for p in self.pieces[:-1]]
        self.breaks = np.array(inner)
        self.seams = sorted(set(list(seams) + inner))

    def __call__(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x)
        idx = np.searchsorted(self.breaks, flat, side="left")
        out = np.empty_like(flat)
        for i, piece in enumerate(self.pieces):
            m = idx == i
            if m.any():
                out[m] = piece.derivs[order](flat[m])
        return out.reshape(x.shape) if x.ndim else float(out[0])

    def derivative(self, order: int) -> Callable:
        return lambda x: self(x, order)

    def jumps(self, max_order: int = 2) -> List[Tuple[float, int, float]]:
        """(seam, order, |left - right|) at every piece boundary."""
        out = []
        for left, right in zip(self.pieces[:-1], self.pieces[1:]):
            s = np.array([left.b])
            for o in range(max_order + 1):
                out.append((left.b, o, float(abs(left.derivs[o](s)[0] - right.derivs[o](s)[0]))))
        return out

    def max_jump(self, max_order: int = 2) -> float:
        return max((j for _, _, j in self.jumps(max_order)), default=0.0)


def _lambdify_derivs(expr, orders: int = MAX_ORDER, symbols=()) -> List[Callable]:
    fns = []
    cur = expr
    for _ in range(orders + 1):
        f = sp.lambdify(_x, cur, "numpy")
        fns.append(_vectorize(f))
        cur = sp.diff(cur, _x)
    return fns


def _vectorize(f):
    def g(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(f(x), dtype=float), x.shape).copy()
    return g


def _supported(fns: List[Callable], a: float, b: float) -> List[Callable]:
    """Zero the (flat) bump outside its open support."""
    def wrap(f):
        def g(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x)
            m = (x > a) & (x < b)
            if m.any():
                with np.errstate(all="ignore"):
                    out[m] = f(x[m])
            return np.nan_to_num(out)
        return g
    return [wrap(f) for f in fns]


# ----- ingredients ----------------------------------------------------------------

def bump_expr(a: float, b: float):
    """exp(-1/(1-s^2)) with s mapping (a, b) onto (-1, 1); value e^{-1} at the centre."""
    c, h = sp.Float((a + b) / 2, 30), sp.Float((b - a) / 2, 30)
    s = (_x - c) / h
    return sp.exp(-1 / (1 - s ** 2))


def build_bumps() -> Tuple[PiecewiseSmoothFn, PiecewiseSmoothFn]:
    out = []
    for (a, b), name in ((BUMP_LEFT, "theta1"), (BUMP_RIGHT, "theta2")):
        fns = _supported(_lambdify_derivs(bump_expr(a, b)), a, b)
        zero = [_vectorize(lambda x: 0.0)] * (MAX_ORDER + 1)
        out.append(PiecewiseSmoothFn([Piece(0.0, a, zero), Piece(a, b, fns), Piece(b, PI, zero)],
                                     name))
    return out[0], out[1]


def smoothstep(s):
    return 6 * s ** 5 - 15 * s ** 4 + 10 * s ** 3


def _affine():
    return -6 * _x / sp.pi + 3


def _blend_exprs(delta: float):
    """Left band [5pi/12 - delta, 5pi/12]: sin 2x -> affine; right band mirrored."""
    a0 = 5 * sp.pi / 12
    d = sp.Float(delta, 30)
    wl = smoothstep((_x - (a0 - d)) / d)
    left = (1 - wl) * sp.sin(2 * _x) + wl * _affine()
    b0 = 7 * sp.pi / 12
    wr = smoothstep((_x - b0) / d)
    right = (1 - wr) * _affine() + wr * sp.sin(2 * _x)
    return left, right


def psi_exprs(C1, C2, delta: float) -> List[Tuple[float, float, object]]:
    """Sympy pieces of psi; bump pieces use the flat bump on their open support."""
    s2 = sp.sin(2 * _x)
    left, right = _blend_exprs(delta)
    lo, hi = OMEGA
    return [
        (0.0, BUMP_LEFT[0], s2),
        (BUMP_LEFT[0], BUMP_LEFT[1], s2 + sp.Float(C1, 30) * bump_expr(*BUMP_LEFT)),
        (BUMP_LEFT[1], lo - delta, s2),
        (lo - delta, lo, left),
        (lo, hi, _affine()),
        (hi, hi + delta, right),
        (hi + delta, BUMP_RIGHT[0], s2),
        (BUMP_RIGHT[0], BUMP_RIGHT[1], s2 - sp.Float(C2, 30) * bump_expr(*BUMP_RIGHT)),
        (BUMP_RIGHT[1], PI, s2),
    ]


def _pieces_from(exprs, bump_idx=(1, 7)) -> List[Piece]:
    pieces = []
    for i, (a, b, e) in enumerate(exprs):
        fns = _lambdify_derivs(e)
        if i in bump_idx:
            base = _lambdify_derivs(sp.sin(2 * _x))
            extra = _supported(_lambdify_derivs(e - sp.sin(2 * _x)), a, b)
            fns = [(lambda f, g: (lambda x: f(x) + g(x)))(f, g) for f, g in zip(base, extra)]
        pieces.append(Piece(a, b, fns))
    return pieces


def blend_deviation(delta: float, grid: int = 10_000) -> float:
    """max |psi - sin 2x| over both transition bands (bumps do not reach them)."""
    left, right = _blend_exprs(delta)
    fl, fr = sp.lambdify(_x, left - sp.sin(2 * _x)), sp.lambdify(_x, right - sp.sin(2 * _x))
    lo, hi = OMEGA
    xl = np.linspace(lo - delta, lo, grid // 2)
    xr = np.linspace(hi, hi + delta, grid // 2)
    return float(max(np.abs(fl(xl)).max(), np.abs(fr(xr)).max()))


def blend_width(eps: float, grid: int = 10_000) -> float:
    """Largest (pi/12)/2^j whose blend keeps |psi - sin 2x| < eps on the bands."""
    if not 0 < eps <= 0.05:
        raise EpsilonTooLarge(f"eps = {eps} outside (0, 0.05]")
    delta = PI / 12
    for _ in range(40):
        if blend_deviation(delta, grid) < eps:
            return delta
        delta /= 2
    raise EpsilonTooLarge(f"no blend width meets eps = {eps}")


def build_psi(eps: float, C1: float, C2: float, delta: Optional[float] = None,
              grid: int = 10_000) -> PiecewiseSmoothFn:
    delta = blend_width(eps, grid) if delta is None else delta
    dev = blend_deviation(delta, grid)
    if dev >= eps:
        raise EpsilonTooLarge(f"blend deviation {dev:.4g} >= eps = {eps}")
    psi = PiecewiseSmoothFn(_pieces_from(psi_exprs(C1, C2, delta)), "psi",
                            seams=list(BUMP_LEFT) + list(BUMP_RIGHT))
    psi.delta, psi.eps, psi.C1, psi.C2 = delta, eps, C1, C2
    x = np.linspace(0, PI, grid)[1:-1]
    v = psi(x)
    left, right = x < PI / 2, x > PI / 2
    bad = np.concatenate([x[left][v[left] <= 0], x[right][v[right] >= 0]])
    if bad.size:
        raise ExtraZero(f"psi changes sign away from 0, pi/2, pi (near x = {bad[0]:.6f})")
    return psi


# ----- integrals ------------------------------------------------------------------

class CumulativeIntegral:
    """F(x) = int_0^x f, exact to quadrature accuracy via panel Gauss-Legendre."""

    def __init__(self, f: Callable, breaks: Sequence[float], panels: int = 2048, order: int = 20):
        cuts = sorted(set([0.0, PI] + [b for b in breaks if 0 < b < PI]))
        edges = []
        for a, b in zip(cuts[:-1], cuts[1:]):
            m = max(2, int(np.ceil(panels * (b - a) / PI)))
            edges.extend(np.linspace(a, b, m + 1)[:-1])
        self.edges = np.array(edges + [PI])
        self.f = f
        self.nodes, self.weights = np.polynomial.legendre.leggauss(order)
        lo, hi = self.edges[:-1], self.edges[1:]
        self.cum = np.concatenate([[0.0], np.cumsum(self._gauss(lo, hi))])

    def _gauss(self, lo, hi):
        half = 0.5 * (hi - lo)
        pts = half[:, None] * self.nodes[None, :] + (0.5 * (hi + lo))[:, None]
        return half * (self.f(pts.ravel()).reshape(pts.shape) @ self.weights)

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        i = np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, len(self.edges) - 2)
        return self.cum[i] + self._gauss(self.edges[i], x)

    def between(self, a: float, b: float) -> float:
        return float(self(np.array([b]))[0] - self(np.array([a]))[0])


def gauss_integral(f: Callable, a: float, b: float, breaks: Sequence[float] = (),
                   tol: float = 1e-12) -> float:
    """int_a^b f by composite Gauss-Legendre, checked against a refined rule."""
    def rule(panels):
        cuts = sorted(set([a, b] + [c for c in breaks if a < c < b]))
        nodes, weights = np.polynomial.legendre.leggauss(20)
        total = 0.0
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            e = np.linspace(lo, hi, panels + 1)
            half = 0.5 * np.diff(e)
            mid = 0.5 * (e[1:] + e[:-1])
            pts = half[:, None] * nodes + mid[:, None]
            total += float((half * (f(pts.ravel()).reshape(pts.shape) @ weights)).sum())
        return total
    coarse, fine = rule(32), rule(64)
    if abs(coarse - fine) > tol * max(1.0, abs(fine)):
        raise ArithmeticError(f"quadrature did not converge ({abs(coarse - fine):.2e})")
    return fine


# ----- constants ----------------------------------------------------------------------

@dataclass
class Constants:
    C1: float
    C2: float
    tau: float
    eps: float
    delta: float
    left_base: float        # 1/pi + 6 int_0^{5pi/12} sin(6y) psi_0
    right_base: float       # -1/pi - 6 int_{7pi/12}^pi sin(6y) psi_0
    residuals: Tuple[float, float]


def sign_anchors() -> Tuple[object, object]:
    """Exact values of 1/pi + 6 int sin6y sin2y over the left and right windows."""
    y = sp.Symbol("y")
    left = 1 / sp.pi + 6 * sp.integrate(sp.sin(6 * y) * sp.sin(2 * y), (y, 0, 5 * sp.pi / 12))
    right = -1 / sp.pi - 6 * sp.integrate(sp.sin(6 * y) * sp.sin(2 * y), (y, 7 * sp.pi / 12, sp.pi))
    return sp.nsimplify(sp.simplify(left)), sp.nsimplify(sp.simplify(right))


def solve_constants(eps: float, delta: Optional[float] = None) -> Constants:
    """C1, C2 from the two window equations, then tau; psi is affine in (C1, C2)."""
    delta = blend_width(eps) if delta is None else delta
    psi0 = build_psi(eps, 0.0, 0.0, delta)
    th1, th2 = build_bumps()
    lo, hi = OMEGA
    br = psi0.seams
    s6 = lambda f: (lambda x: np.sin(6 * x) * f(x))
    left = 1 / PI + 6 * gauss_integral(s6(psi0), 0.0, lo, br)
    if left >= 0:
        raise SignViolation(f"1/pi + 6 int sin(6y) psi_0 = {left:.3e} >= 0 on the left window")
    right = -1 / PI - 6 * gauss_integral(s6(psi0), hi, PI, br)
    if right <= 0:
        raise SignViolation(f"-1/pi - 6 int sin(6y) psi_0 = {right:.3e} <= 0 on the right window")
    J1 = gauss_integral(s6(th1), *BUMP_LEFT)
    J2 = gauss_integral(s6(th2), *BUMP_RIGHT)
    C1 = -left / (6 * J1)
    C2 = -right / (6 * J2)
    psi = build_psi(eps, C1, C2, delta)
    r1 = 1 / PI + 6 * gauss_integral(s6(psi), 0.0, lo, psi.seams)
    r2 = -1 / PI - 6 * gauss_integral(s6(psi), hi, PI, psi.seams)
    tau = 1 / 6 - 6 * gauss_integral(lambda x: np.cos(6 * x) * psi(x), 0.0, lo, psi.seams)
    return Constants(C1, C2, tau, eps, delta, left, right, (abs(r1), abs(r2)))


# ----- phi and q --------------------------------------------------------------------

def build_phi(psi: PiecewiseSmoothFn, tau: float) -> PiecewiseSmoothFn:
    Ic = CumulativeIntegral(lambda x: np.cos(6 * x) * psi(x), psi.seams)
    Is = CumulativeIntegral(lambda x: np.sin(6 * x) * psi(x), psi.seams)
    start = tau + psi(np.array([0.0]), 1)[0] / 6

    def A(x):
        return start + 6 * Ic(x)

    def B(x):
        return 6 * Is(x)

    def f0(x):
        x = np.asarray(x, dtype=float)
        return (A(x) * np.sin(6 * x) - B(x) * np.cos(6 * x) - psi(np.atleast_1d(x))).reshape(x.shape)

    def f1(x):
        x = np.asarray(x, dtype=float)
        return (6 * A(x) * np.cos(6 * x) + 6 * B(x) * np.sin(6 * x)
                - psi(np.atleast_1d(x), 1)).reshape(x.shape)

    def f2(x):
        return -36 * f0(x) - psi(np.atleast_1d(np.asarray(x, float)), 2).reshape(np.shape(x))

    def f3(x):
        return -36 * f1(x) - psi(np.atleast_1d(np.asarray(x, float)), 3).reshape(np.shape(x))

    def f4(x):
        return -36 * f2(x) - psi(np.atleast_1d(np.asarray(x, float)), 4).reshape(np.shape(x))

    phi = PiecewiseSmoothFn([Piece(0.0, PI, [f0, f1, f2, f3, f4])], "phi", seams=psi.seams)
    phi.tau = tau
    return phi


def q_expression(psi_expr):
    """Sympy q = (psi'' + 36 psi)/psi for a local expression of psi."""
    return sp.simplify((sp.diff(psi_expr, _x, 2) + 36 * psi_expr) / psi_expr)


def build_q(psi: PiecewiseSmoothFn, grid: int = 10_000) -> PiecewiseSmoothFn:
    """q by the quotient; constant 32 where psi = sin 2x, 36 where psi is affine."""
    pieces = []
    for piece, (a, b, e) in zip(psi.pieces, psi_exprs(psi.C1, psi.C2, psi.delta)):
        if e == sp.sin(2 * _x) or e == _affine():
            val = 32.0 if e == sp.sin(2 * _x) else 36.0
            const = [_vectorize(lambda x, v=val: v)] + [_vectorize(lambda x: 0.0)] * MAX_ORDER
            pieces.append(Piece(a, b, const))
            continue

        def quotient(order, pc=piece):
            p = pc.derivs

            def f(x):
                x = np.asarray(x, dtype=float)
                if order == 0:
                    return (p[2](x) + 36 * p[0](x)) / p[0](x)
                # derivatives of q = 36 + psi''/psi
                r = p[2](x) / p[0](x)
                if order == 1:
                    return (p[3](x) - r * p[1](x)) / p[0](x)
                r1 = (p[3](x) - r * p[1](x)) / p[0](x)
                return (p[4](x) - r1 * p[1](x) - r * p[2](x) - r1 * p[1](x)) / p[0](x)
            return f
        pieces.append(Piece(a, b, [quotient(o) for o in range(3)]))
    q = PiecewiseSmoothFn(pieces, "q", seams=psi.seams)
    x = np.linspace(0, PI, grid)
    if not np.isfinite(q(x)).all():
        raise ExtraZero("q is unbounded on the grid")
    q.bound = float(np.abs(q(x)).max())
    return q


# ----- verification and driver -------------------------------------------------------

@dataclass
class CounterexampleReport:
    ok: bool
    witness: WitnessReport
    seam_jump: float
    phi_norm: float
    psi_norm: float
    q_bound: float
    failures: List[dict] = field(default_factory=list)

    def to_record(self) -> dict:
        w = self.witness
        return {"ok": self.ok, "psi_residual": w.max_residual_psi, "phi_residual": w.max_residual_phi,
                "phi_on_omega": w.max_phi_on_omega, "boundary": w.boundary,
                "seam_jump": self.seam_jump, "phi_norm": self.phi_norm, "psi_norm": self.psi_norm,
                "q_bound": self.q_bound, "failures": self.failures}


def verify_counterexample(psi: PiecewiseSmoothFn, phi: PiecewiseSmoothFn, q: PiecewiseSmoothFn,
                          omega: Tuple[float, float] = OMEGA, grid: int = 10_000,
                          tol: float = 1e-6, omega_tol: float = 1e-10) -> CounterexampleReport:
    witness = fattorini_witness_distributed(q, omega, (psi, phi, 36.0), grid, tol, omega_tol)
    failures = list(witness.failures)
    jump = psi.max_jump(2)
    if jump > 1e-10:
        failures.append({"check": "seam_smoothness", "value": jump, "x": None})
    x = np.linspace(0, PI, grid)
    pn = float(np.sqrt(np.mean(psi(x) ** 2)))
    fn = float(np.sqrt(np.mean(phi(x) ** 2)))
    qb = float(np.abs(q(x)).max())
    return CounterexampleReport(not failures, witness, jump, fn, pn, qb, failures)


@dataclass
class Counterexample:
    psi: PiecewiseSmoothFn
    phi: PiecewiseSmoothFn
    q: PiecewiseSmoothFn
    constants: Constants
    report: CounterexampleReport
    attempts: List[Tuple[float, str]]

    def table(self, count: int = 201) -> List[Tuple[float, float, float, float]]:
        x = np.linspace(0, PI, count)
        return list(zip(x.tolist(), self.psi(x).tolist(), self.phi(x).tolist(), self.q(x).tolist()))

    def to_record(self, count: int = 201) -> dict:
        c = self.constants
        fmt = lambda v: repr(float(v))
        return {"constants": {"C1": fmt(c.C1), "C2": fmt(c.C2), "tau": fmt(c.tau),
                              "eps": fmt(c.eps), "delta": fmt(c.delta)},
                "blend": "quintic smoothstep 6s^5-15s^4+10s^3",
                "bumps": "exp(-1/(1-s^2)) on (pi/24,3pi/24) and (21pi/24,23pi/24)",
                "report": self.report.to_record(),
                "attempts": [[e, why] for e, why in self.attempts],
                "table": [[fmt(a), fmt(b), fmt(cc), fmt(d)] for a, b, cc, d in self.table(count)]}


def build_counterexample(eps: float = 0.02, grid: int = 10_000, max_halvings: int = 12) -> Counterexample:
    """Full construction, halving eps until every sign and zero condition holds."""
    attempts = []
    for _ in range(max_halvings + 1):
        try:
            const = solve_constants(eps)
            if const.C1 <= 0 or const.C2 <= 0:
                raise SignViolation(f"C1 = {const.C1:.3e}, C2 = {const.C2:.3e}")
            psi = build_psi(eps, const.C1, const.C2, const.delta, grid)
        except (SignViolation, ExtraZero, EpsilonTooLarge) as exc:
            attempts.append((eps, f"{type(exc).__name__}: {exc}"))
            eps /= 2
            continue
        attempts.append((eps, "ok"))
        phi = build_phi(psi, const.tau)
        q = build_q(psi, grid)
        report = verify_counterexample(psi, phi, q, OMEGA, grid)
        return Counterexample(psi, phi, q, const, report, attempts)
    raise SignViolation(f"no admissible eps after {max_halvings} halvings: {attempts[-1][1]}")
