"""Matrix differential operators in (t, x) over the jet field Q(x, q0, q1, ...).

An entry is a finite sum  c_{a,b} d_t^a d_x^b  with coefficients that are
reduced rational functions of x and the jets q_i = d_x^i q (time-independent).
Composition expands d_x o c = c d_x + D(c) with the total derivation
D = d/dx + sum_i q_{i+1} d/dq_i.
"""
from __future__ import annotations

import random
from math import comb
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy as sp

from .errors import DimensionMismatch

JET_ORDER = 16
Q = sp.symbols(f"q0:{JET_ORDER + 1}")
X, T = sp.symbols("x t")

Entry = Dict[Tuple[int, int], sp.Expr]


def derive(c: sp.Expr, times: int = 1) -> sp.Expr:
    """Total x-derivative of a jet coefficient."""
    for _ in range(times):
        free = c.free_symbols
        out = sp.diff(c, X) if X in free else sp.Integer(0)
        for i in range(JET_ORDER):
            if Q[i] in free:
                out += sp.diff(c, Q[i]) * Q[i + 1]
        c = sp.cancel(out)
    return c


def _canon(entry: Entry) -> Entry:
    out = {}
    for key in sorted(entry):
        c = sp.cancel(sp.together(entry[key]))
        if c != 0:
            out[key] = c
    return out


def _add_into(acc: Entry, key, val):
    acc[key] = acc.get(key, sp.Integer(0)) + val


def _compose_entries(P: Entry, R: Entry) -> Entry:
    out: Entry = {}
    for (a, b), c in P.items():
        for (a2, b2), d in R.items():
            # c d_t^a d_x^b o d d_t^a2 d_x^b2 ; d is t-independent
            for i in range(b + 1):
                _add_into(out, (a + a2, b - i + b2), c * comb(b, i) * derive(d, i))
    return _canon(out)


class DiffOp:
    """rows x cols matrix of scalar differential operators in canonical form."""

    def __init__(self, entries: Sequence[Sequence[Entry]]):
        self.entries = [[_canon(dict(e)) for e in row] for row in entries]
        self.rows = len(self.entries)
        self.cols = len(self.entries[0]) if self.rows else 0
        if any(len(r) != self.cols for r in self.entries):
            raise DimensionMismatch("ragged operator matrix")

    # constructors -------------------------------------------------------------
    @classmethod
    def zeros(cls, rows: int, cols: int) -> "DiffOp":
        return cls([[{} for _ in range(cols)] for _ in range(rows)])

    @classmethod
    def identity(cls, n: int) -> "DiffOp":
        return cls([[{(0, 0): sp.Integer(1)} if i == j else {} for j in range(n)] for i in range(n)])

    @classmethod
    def scalar(cls, c) -> "DiffOp":
        return cls([[{(0, 0): sp.sympify(c)}]])

    @classmethod
    def deriv(cls, a: int = 0, b: int = 0, c=1) -> "DiffOp":
        return cls([[{(a, b): sp.sympify(c)}]])

    @classmethod
    def row(cls, *ops: "DiffOp") -> "DiffOp":
        return cls([[op.entries[0][0] for op in ops]])

    @classmethod
    def stack(cls, *ops: "DiffOp") -> "DiffOp":
        if len({op.cols for op in ops}) != 1:
            raise DimensionMismatch("stacked operators need equal column counts")
        return cls([row for op in ops for row in op.entries])

    # algebra -----------------------------------------------------------------------
    def __add__(self, other: "DiffOp") -> "DiffOp":
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise DimensionMismatch(f"{self.shape} + {other.shape}")
        out = []
        for r1, r2 in zip(self.entries, other.entries):
            row = []
            for e1, e2 in zip(r1, r2):
                e = dict(e1)
                for k, v in e2.items():
                    _add_into(e, k, v)
                row.append(e)
            out.append(row)
        return DiffOp(out)

    def __neg__(self) -> "DiffOp":
        return self.scale(-1)

    def __sub__(self, other: "DiffOp") -> "DiffOp":
        return self + (-other)

    def scale(self, c) -> "DiffOp":
        """Left multiplication by a coefficient (no derivative falls on c)."""
        c = sp.sympify(c)
        return DiffOp([[{k: c * v for k, v in e.items()} for e in row] for row in self.entries])

    def __matmul__(self, other: "DiffOp") -> "DiffOp":
        return compose(self, other)

    def __eq__(self, other) -> bool:
        return isinstance(other, DiffOp) and (self - other).is_zero()

    __hash__ = None

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.rows, self.cols)

    def is_zero(self) -> bool:
        return all(not e for row in self.entries for e in row)

    def max_orders(self) -> Tuple[int, int, int]:
        """(max total order, max t-order, max x-order) over all terms."""
        keys = [k for row in self.entries for e in row for k in e]
        if not keys:
            return (0, 0, 0)
        return (max(a + b for a, b in keys), max(a for a, _ in keys), max(b for _, b in keys))

    def jet_order(self) -> int:
        """Highest jet index q_i present in a coefficient (-1 if none)."""
        top = -1
        for row in self.entries:
            for e in row:
                for c in e.values():
                    for i, s in enumerate(Q):
                        if s in c.free_symbols:
                            top = max(top, i)
        return top

    # application ------------------------------------------------------------------------
    def apply(self, funcs: Sequence[sp.Expr], q_expr: Optional[sp.Expr] = None,
              jets: Optional[Dict[int, sp.Expr]] = None) -> List[sp.Expr]:
        """Apply to sympy functions of (t, x); q given as an expression in x or as jets."""
        if len(funcs) != self.cols:
            raise DimensionMismatch(f"operator has {self.cols} inputs, got {len(funcs)}")
        subs = {}
        for i in range(JET_ORDER + 1):
            if jets is not None:
                subs[Q[i]] = jets.get(i, sp.Integer(0))
            elif q_expr is not None:
                subs[Q[i]] = sp.diff(q_expr, X, i)
        out = []
        for row in self.entries:
            tot = sp.Integer(0)
            for e, f in zip(row, funcs):
                for (a, b), c in e.items():
                    d = f
                    if a:
                        d = sp.diff(d, T, a)
                    if b:
                        d = sp.diff(d, X, b)
                    tot += c.subs(subs) * d
            out.append(sp.cancel(sp.together(tot)))
        return out

    # export -------------------------------------------------------------------------------
    def terms(self) -> List[dict]:
        """Machine-readable list: row, col, a, b, numerator and denominator tables."""
        out = []
        gens = (X,) + Q
        for i, row in enumerate(self.entries):
            for j, e in enumerate(row):
                for (a, b), c in e.items():
                    num, den = sp.fraction(sp.cancel(c))
                    out.append({"row": i, "col": j, "a": a, "b": b,
                                "numerator": _poly_table(num, gens),
                                "denominator": _poly_table(den, gens)})
        return out

    def pretty(self) -> str:
        lines = []
        for i, row in enumerate(self.entries):
            cells = [format_entry(e) for e in row]
            lines.append(f"[{i}] " + " | ".join(cells))
        return "\n".join(lines)

    def __repr__(self) -> str:
        return f"DiffOp{self.shape}:\n{self.pretty()}"


def _poly_table(expr, gens) -> List[List]:
    poly = sp.Poly(expr, *gens)
    used = [g for g in gens if poly.degree(g) > 0]
    return [[{str(g): int(m[gens.index(g)]) for g in used}, str(coef)] for m, coef in poly.terms()]


def format_entry(e: Entry) -> str:
    if not e:
        return "0"
    parts = []
    for (a, b), c in e.items():
        d = " ".join(f for f in ("d_t" + (f"^{a}" if a > 1 else "") if a else "",
                                 "d_x" + (f"^{b}" if b > 1 else "") if b else "") if f)
        cs = sp.sstr(c)
        if not d:
            parts.append(cs)
        elif c == 1:
            parts.append(d)
        elif c == -1:
            parts.append("-" + d)
        else:
            parts.append(f"({cs})*{d}")
    return " + ".join(parts)


def compose(P: DiffOp, R: DiffOp) -> DiffOp:
    """P o R with Leibniz expansion."""
    if P.cols != R.rows:
        raise DimensionMismatch(f"cannot compose {P.shape} with {R.shape}")
    out = []
    for i in range(P.rows):
        row = []
        for j in range(R.cols):
            acc: Entry = {}
            for k in range(P.cols):
                for key, v in _compose_entries(P.entries[i][k], R.entries[k][j]).items():
                    _add_into(acc, key, v)
            row.append(acc)
        out.append(row)
    return DiffOp(out)


def formal_adjoint(P: DiffOp) -> DiffOp:
    """(c d_t^a d_x^b)* = (-1)^{a+b} d_t^a d_x^b o c, transposed."""
    out = [[{} for _ in range(P.rows)] for _ in range(P.cols)]
    for i, row in enumerate(P.entries):
        for j, e in enumerate(row):
            acc: Entry = {}
            for (a, b), c in e.items():
                piece = _compose_entries({(a, b): sp.Integer((-1) ** (a + b))}, {(0, 0): c})
                for key, v in piece.items():
                    _add_into(acc, key, v)
            out[j][i] = acc
    return DiffOp(out)


# ----- the operators of the fictitious-control construction ------------------------------

dt = DiffOp.deriv(1, 0)
dx = DiffOp.deriv(0, 1)
dxx = DiffOp.deriv(0, 2)
one = DiffOp.scalar(1)
zero = DiffOp.scalar(0)
q = DiffOp.scalar(Q[0])


def build_L() -> DiffOp:
    """(z1, z2, v) -> (d_t z1 - z1_xx - z2_xx + q z1, d_t z2 - z2_xx - v)."""
    return DiffOp([[{(1, 0): 1, (0, 2): -1, (0, 0): Q[0]}, {(0, 2): -1}, {}],
                   [{}, {(1, 0): 1, (0, 2): -1}, {(0, 0): -1}]])


def build_Lstar() -> DiffOp:
    """psi -> (-psi1_t - psi1_xx + q psi1, -psi2_t - psi2_xx - psi1_xx, -psi2)."""
    return DiffOp([[{(1, 0): -1, (0, 2): -1, (0, 0): Q[0]}, {}],
                   [{(0, 2): -1}, {(1, 0): -1, (0, 2): -1}],
                   [{}, {(0, 0): -1}]])


def build_Mstar_chain() -> Tuple[List[DiffOp], DiffOp]:
    """[M1*, ..., M6*] and the assembled 2x3 operator M*."""
    q0, q1, q2 = Q[0], Q[1], Q[2]
    M1 = DiffOp([[{}, {(0, 0): -1}, {(1, 0): 1, (0, 2): 1}]])
    M2 = -M1 - DiffOp([[{(0, 0): 1}, {}, {}]])
    M3 = ((DiffOp([[{(1, 0): -1, (0, 0): q0}]]) @ M1) + (dxx @ M2)).scale(1 / (-2 * q1))
    M4 = (dx @ M2) - (dt @ M3)
    r = q2 / (2 * q1)
    M5 = (M4 + M2.scale(r)).scale(-1 / q0) - M3
    M6 = DiffOp([[{}, {}, {(0, 0): -1}]])
    Mstar = DiffOp.stack(M5.scale(q0 / q1), M6)
    return [M1, M2, M3, M4, M5, M6], Mstar


def build_M() -> DiffOp:
    return formal_adjoint(build_Mstar_chain()[1])


def expected_chain_actions() -> List[DiffOp]:
    """The right-hand sides M_i* o L* for i = 1..5, as 1x2 operators on psi."""
    q0, q1, q2 = Q[0], Q[1], Q[2]
    r = q2 / (2 * q1)
    return [DiffOp([[{(0, 2): 1}, {}]]),
            DiffOp([[{(1, 0): 1, (0, 0): -q0}, {}]]),
            DiffOp([[{(0, 1): 1, (0, 0): r}, {}]]),
            DiffOp([[{(0, 1): -q0, (0, 0): -q1, (1, 0): -r}, {}]]),
            DiffOp([[{(0, 0): q1 / q0}, {}]])]


def verify_chain() -> List[Tuple[bool, DiffOp]]:
    Ls = build_Lstar()
    chain, _ = build_Mstar_chain()
    out = []
    for Mi, want in zip(chain[:5], expected_chain_actions()):
        got = Mi @ Ls
        out.append((got == want, got - want))
    return out


def verify_identity_MstarLstar() -> Tuple[bool, DiffOp]:
    res = (build_Mstar_chain()[1] @ build_Lstar()) - DiffOp.identity(2)
    return res.is_zero(), res


def verify_identity_LM() -> Tuple[bool, DiffOp]:
    res = (build_L() @ build_M()) - DiffOp.identity(2)
    return res.is_zero(), res


def required_smoothness() -> dict:
    """Derivative orders of M: the regularity a fictitious control must have."""
    M = build_M()
    total, ta, xb = M.max_orders()
    return {"total_order": total, "t_order": ta, "x_order": xb, "q_jets": M.jet_order(),
            "assumption": "q != 0 and q_x != 0 on the working window"}


# ----- oracles --------------------------------------------------------------------------------

def random_polynomial(deg: int, rng: random.Random) -> sp.Expr:
    return sum(sp.Rational(rng.randint(-5, 5), rng.randint(1, 4)) * T ** i * X ** j
               for i in range(deg + 1) for j in range(deg + 1))


def polynomial_oracle(op: DiffOp, target: DiffOp, degree: int = 6, trials: int = 3,
                      seed: int = 0, jets: Optional[Dict[int, sp.Expr]] = None) -> Tuple[bool, List]:
    """Exact check op(f) == target(f) on random rational polynomials, q(x) = x."""
    jets = {0: X, 1: sp.Integer(1)} if jets is None else jets
    rng = random.Random(seed)
    bad = []
    for _ in range(trials):
        fs = [random_polynomial(degree, rng) for _ in range(op.cols)]
        got = op.apply(fs, jets=jets)
        want = target.apply(fs, jets=jets)
        diff = [sp.cancel(g - w) for g, w in zip(got, want)]
        if any(d != 0 for d in diff):
            bad.append(diff)
    return not bad, bad


def random_diffop(rows: int, cols: int, rng: random.Random, max_order: int = 2) -> DiffOp:
    """Small random operator with polynomial/rational jet coefficients."""
    pool = [sp.Integer(1), Q[0], Q[1], Q[0] * Q[1], X, 1 / Q[0], Q[2] - X]
    out = []
    for _ in range(rows):
        row = []
        for _ in range(cols):
            e = {}
            for _ in range(rng.randint(0, 3)):
                a, b = rng.randint(0, max_order), rng.randint(0, max_order)
                if a + b <= max_order:
                    e[(a, b)] = e.get((a, b), 0) + rng.randint(-3, 3) * rng.choice(pool)
            row.append(e)
        out.append(row)
    return DiffOp(out)


# ----- finite-difference check -------------------------------------------------------------

_D1 = np.array([1, -8, 0, 8, -1]) / 12.0
_D2 = np.array([-1, 16, -30, 16, -1]) / 12.0


def _fd(arr: np.ndarray, axis: int, order: int, h: float) -> np.ndarray:
    """4th-order central derivative; entries within two cells of an edge become nan."""
    for _ in range(order // 2):
        arr = _stencil(arr, _D2, axis) / h ** 2
    if order % 2:
        arr = _stencil(arr, _D1, axis) / h
    return arr


def _stencil(arr, w, axis):
    out = np.full_like(arr, np.nan)
    n = arr.shape[axis]
    core = sum(wi * np.take(arr, range(i, n - 4 + i), axis=axis) for i, wi in enumerate(w))
    idx = [slice(None)] * arr.ndim
    idx[axis] = slice(2, n - 2)
    out[tuple(idx)] = core
    return out


def apply_fd(op: DiffOp, grids: Sequence[np.ndarray], coeff_fns: Callable, h: float) -> List[np.ndarray]:
    """Apply ``op`` to sampled components on a (t, x) grid with spacing h.

    ``coeff_fns(expr)`` returns the coefficient sampled on the grid.
    """
    out = []
    for row in op.entries:
        tot = np.zeros_like(grids[0])
        for e, g in zip(row, grids):
            for (a, b), c in e.items():
                d = _fd(_fd(g, 0, a, h), 1, b, h)
                tot = tot + coeff_fns(c) * d
        out.append(tot)
    return out


def fd_identity_error(q_derivs: Sequence[Callable], window: Tuple[float, float], h: float,
                      psi: Sequence[Callable] = None, t_window: Tuple[float, float] = (0.4, 0.6)):
    """max |M*(L* psi) - psi| / max |psi| on the window, all derivatives by FD.

    ``q_derivs[i]`` is x -> d_x^i q.  Returns (relative error, number of points).
    """
    if psi is None:
        psi = (lambda t, x: np.exp(-t) * np.cos(3 * x) + t * x ** 2,
               lambda t, x: np.sin(2 * t * x + 1) + x ** 3)
    _, Mstar = build_Mstar_chain()
    Ls = build_Lstar()
    pad = 12
    ts = np.arange(t_window[0] - pad * h, t_window[1] + pad * h + h / 2, h)
    xs = np.arange(window[0] - pad * h, window[1] + pad * h + h / 2, h)
    TT, XX = np.meshgrid(ts, xs, indexing="ij")
    qv = [f(XX) for f in q_derivs]

    def coeff(c):
        f = sp.lambdify([X] + list(Q[:len(qv)]), c, "numpy")
        with np.errstate(all="ignore"):
            return np.broadcast_to(f(XX, *qv), XX.shape)
    comps = [f(TT, XX) for f in psi]
    mid = apply_fd(Ls, comps, coeff, h)
    back = apply_fd(Mstar, mid, coeff, h)
    inside = ((TT >= t_window[0] - 1e-12) & (TT <= t_window[1] + 1e-12)
              & (XX >= window[0] - 1e-12) & (XX <= window[1] + 1e-12))
    err = max(np.nanmax(np.abs(b - c)[inside]) for b, c in zip(back, comps))
    scale = max(np.abs(c[inside]).max() for c in comps)
    return float(err / scale), int(inside.sum())


def fd_convergence(q_derivs: Sequence[Callable], window: Tuple[float, float],
                   h0: float = 0.02, levels: int = 2) -> List[Tuple[float, float]]:
    """[(h, relative error)] under successive halving."""
    out = []
    h = h0
    for _ in range(levels):
        out.append((h, fd_identity_error(q_derivs, window, h)[0]))
        h /= 2
    return out
