"""System matrices, explicit adjoint spectrum and per-mode linear algebra.

The system is y_t - D y_xx + A y = (control) on (0, pi) with

    D = d*I + N  (N the nilpotent upper shift),  A = alpha * e_n e_1^T,  B = e_n.

The adjoint mode matrix k^2 D^T + A^T has the explicit eigenvalues

    lambda_{j,k} = d k^2 + alpha^{1/n} k^{2-2/n} exp(2 pi i j / n)        (alpha > 0)
    lambda_{j,k} = d k^2 + |alpha|^{1/n} k^{2-2/n} exp((2j+1) pi i / n)   (alpha < 0)

with eigenvectors (r^{l-1})_{l=1..n}, r = k^2 / (lambda - d k^2).  For alpha = 0
the single eigenvalue d k^2 carries the Jordan chain e_n, e_{n-1}, ..., e_1.
"""
from __future__ import annotations

import os
from functools import lru_cache
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, NamedTuple, Optional, Tuple

import mpmath as mp

from .arith import Number, exact, to_mpf
from .errors import AlphaZero, InvalidDimension, InvalidParameter, NonElliptic

DEFAULT_PRECISION = 50


def default_precision(fallback: int = DEFAULT_PRECISION) -> int:
    """Working precision, overridable through WORKBENCH_PRECISION."""
    env = os.environ.get("WORKBENCH_PRECISION")
    if env:
        return int(env)
    return fallback


@dataclass(frozen=True)
class SystemParams:
    n: int
    d: Number = 1
    alpha: Number = 0
    precision: int = DEFAULT_PRECISION

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 2:
            raise InvalidDimension(f"n must be an integer >= 2, got {self.n!r}")
        if self.precision < 16:
            raise InvalidParameter("precision must be at least 16 digits")
        with mp.workdps(30):
            if to_mpf(self.d) < 1:
                raise InvalidParameter(f"d must satisfy d >= 1, got {self.d!r}")

    @property
    def d_exact(self) -> Optional[Fraction]:
        return exact(self.d)

    @property
    def alpha_exact(self) -> Optional[Fraction]:
        return exact(self.alpha)

    @property
    def is_exact(self) -> bool:
        return self.d_exact is not None and self.alpha_exact is not None

    def d_mp(self):
        return to_mpf(self.d)

    def alpha_mp(self):
        return to_mpf(self.alpha)

    @property
    def alpha_sign(self) -> int:
        a = self.alpha_exact
        if a is None:
            a = float(self.alpha)
        return (a > 0) - (a < 0)

    def to_record(self) -> dict:
        return {"n": self.n, "d": str(self.d), "alpha": str(self.alpha),
                "precision": self.precision}

    @classmethod
    def from_record(cls, rec: dict) -> "SystemParams":
        return cls(int(rec["n"]), _param(rec.get("d", 1)), _param(rec.get("alpha", 0)),
                   int(rec.get("precision", DEFAULT_PRECISION)))


def _param(v):
    if isinstance(v, str):
        q = exact(v)
        if q is not None:
            return int(q) if q.denominator == 1 else q
    return v


class Matrices(NamedTuple):
    D: mp.matrix
    A: mp.matrix
    B: mp.matrix
    beta: mp.mpf


@dataclass
class EigenPair:
    j: int
    k: int
    lam: mp.mpc
    V: List[mp.mpc]
    chain: Optional[List[List[mp.mpf]]] = None


@dataclass
class Spectrum:
    params: SystemParams
    k_max: int
    pairs: Dict[Tuple[int, int], EigenPair]
    collisions: List[Tuple[Tuple[int, int], Tuple[int, int]]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.pairs.values())

    def __getitem__(self, idx: Tuple[int, int]) -> EigenPair:
        return self.pairs[idx]

    def branches(self) -> int:
        return 1 if self.params.alpha_sign == 0 else self.params.n


@lru_cache(maxsize=256)
def _matrices(params: SystemParams) -> Matrices:
    n = params.n
    if n < 2:
        raise InvalidDimension("n must be >= 2")
    with mp.workdps(params.precision):
        d = params.d_mp()
        D = mp.zeros(n, n)
        for i in range(n):
            D[i, i] = d
            if i + 1 < n:
                D[i, i + 1] = 1
        A = mp.zeros(n, n)
        A[n - 1, 0] = params.alpha_mp()
        B = mp.zeros(n, 1)
        B[n - 1] = 1
        S = (D + D.T) / 2
        beta = min(mp.eigsy(S, eigvals_only=True))
        if beta <= 0:
            raise NonElliptic(f"least eigenvalue of the symmetric part is {beta}")
    return Matrices(D, A, B, beta)


def build_matrices(params: SystemParams) -> Matrices:
    """D, A, B and the ellipticity constant beta (fresh copies; beta is cached)."""
    m = _matrices(params)
    return Matrices(m.D.copy(), m.A.copy(), m.B.copy(), m.beta)


def _phase(params: SystemParams, j: int):
    """exp(i*theta_j) of branch j (exact values on the real axis)."""
    n = params.n
    if params.alpha_sign > 0:
        return mp.expjpi(mp.mpf(2 * j) / n)
    return mp.expjpi(mp.mpf(2 * j + 1) / n)


def eigenvalue(params: SystemParams, j: int, k: int):
    """Closed-form lambda_{j,k} at the current working precision."""
    d = params.d_mp()
    mu = mp.mpf(k) ** 2
    if params.alpha_sign == 0:
        return mp.mpc(d * mu, 0)
    n = params.n
    a = abs(params.alpha_mp())
    rad = mp.root(a, n) * mp.power(k, mp.mpf(2 * n - 2) / n)
    z = _phase(params, j)
    lam = d * mu + rad * z
    return _clean(lam)


def _clean(z):
    z = mp.mpc(z)
    # the phase of a real branch can carry a rounding-level imaginary part
    if z.imag != 0 and abs(z.imag) <= mp.eps * 8 * max(1, abs(z.real)):
        return mp.mpc(z.real, 0)
    return z


def eigen_ratio(params: SystemParams, j: int, k: int):
    """r = alpha^{-1/n} k^{2/n} e^{-i theta_j}, so that c^l = r^{l-1}."""
    n = params.n
    a = abs(params.alpha_mp())
    z = _phase(params, j)
    return _clean(mp.power(k, mp.mpf(2) / n) / mp.root(a, n) * mp.conj(z))


def unnormalized_vector(params: SystemParams, j: int, k: int) -> List[mp.mpc]:
    r = eigen_ratio(params, j, k)
    return [r ** l for l in range(params.n)]


def _normalize(v):
    nrm = mp.sqrt(mp.fsum(abs(c) ** 2 for c in v))
    first = next(c for c in v if c != 0)
    ph = first / abs(first)
    return [_clean(c / (nrm * ph)) for c in v]


def compute_spectrum(params: SystemParams, k_max: int) -> Spectrum:
    if k_max < 1:
        raise InvalidParameter("k_max must be >= 1")
    n = params.n
    pairs: Dict[Tuple[int, int], EigenPair] = {}
    with mp.workdps(params.precision):
        if params.alpha_sign == 0:
            d = params.d_mp()
            for k in range(1, k_max + 1):
                V = [mp.mpc(0)] * (n - 1) + [mp.mpc(1)]
                chain = []
                for p in range(1, n):
                    e = [mp.mpf(0)] * n
                    e[n - 1 - p] = mp.mpf(1)
                    chain.append(e)
                pairs[(0, k)] = EigenPair(0, k, mp.mpc(d * k * k, 0), V, chain)
            return Spectrum(params, k_max, pairs, [])
        for k in range(1, k_max + 1):
            for j in range(n):
                lam = eigenvalue(params, j, k)
                V = _normalize(unnormalized_vector(params, j, k))
                pairs[(j, k)] = EigenPair(j, k, lam, V)
        collisions = find_collisions(params, pairs)
    return Spectrum(params, k_max, pairs, collisions)


def resonance_index(params: SystemParams) -> Optional[int]:
    """m with sqrt(alpha)/d = m in N* (exact inputs only, n = 2, alpha > 0)."""
    if params.n != 2 or params.alpha_sign <= 0 or not params.is_exact:
        return None
    from .arith import is_square_fraction
    ratio = params.alpha_exact / params.d_exact ** 2
    root = is_square_fraction(ratio)
    if root is not None and root.denominator == 1:
        return int(root)
    return None


def find_collisions(params: SystemParams, pairs: Dict[Tuple[int, int], EigenPair]):
    """Symmetric list of index pairs with equal eigenvalues.

    Sort-and-sweep on the real part; equality is tested at working precision
    with relative tolerance 10^-(precision-8).  For the resonant n=2 case the
    closed-form collision set is merged in as an exact certificate.
    """
    tol = mp.mpf(10) ** (-(params.precision - 8))
    items = sorted(pairs.values(), key=lambda p: (p.lam.real, p.lam.imag))
    found = set()
    for a in range(len(items)):
        la = items[a].lam
        scale = max(1, abs(la))
        for b in range(a + 1, len(items)):
            lb = items[b].lam
            if lb.real - la.real > tol * max(scale, abs(lb)):
                break
            if abs(la - lb) <= tol * max(scale, abs(lb)):
                ia, ib = (items[a].j, items[a].k), (items[b].j, items[b].k)
                found.add((ia, ib))
                found.add((ib, ia))
    m = resonance_index(params)
    if m is not None:
        k_max = max(k for _, k in pairs)
        for k in range(1, k_max - m + 1):
            found.add(((0, k), (1, k + m)))
            found.add(((1, k + m), (0, k)))
        for k in range(1, m):
            if k != m - k:
                found.add(((1, k), (1, m - k)))
    return sorted(found, key=lambda p: (p[0][1], p[0][0], p[1][1], p[1][0]))


def eigen_residual(params: SystemParams, pair: EigenPair):
    """Euclidean norm of (k^2 D^T + A^T) V - lambda V."""
    with mp.workdps(params.precision):
        # D^T is d on the diagonal with ones below it; A^T = alpha e_1 e_n^T
        d, mu, V = params.d_mp(), mp.mpf(pair.k) ** 2, pair.V
        r = [mu * (d * V[l] + (V[l - 1] if l else 0)) - pair.lam * V[l] for l in range(params.n)]
        r[0] += params.alpha_mp() * V[-1]
        return mp.sqrt(mp.fsum(abs(c) ** 2 for c in r))


def mode_matrix(params: SystemParams, k: int) -> mp.matrix:
    """The modal generator k^2 D + A of the forward system."""
    mats = build_matrices(params)
    return (k ** 2) * mats.D + mats.A


class KalmanResult(NamedTuple):
    matrix: mp.matrix
    rank: int
    abs_det: mp.mpf
    closed_form: mp.mpf


def kalman_matrix(params: SystemParams, k: int) -> KalmanResult:
    n = params.n
    with mp.workdps(params.precision):
        M = mode_matrix(params, k)
        B = build_matrices(params).B
        K = mp.zeros(n, n)
        col = B
        for c in range(n):
            for r in range(n):
                K[r, c] = col[r]
            col = M * col
        det = abs(mp.det(K))
        sv = mp.svd_r(K, compute_uv=False)
        smax = max(sv)
        tol = smax * mp.mpf(10) ** (-(params.precision - 10)) * n
        rank = sum(1 for s in sv if s > tol)
        mu = mp.mpf(k) ** 2
        closed = mp.fprod(mu ** l for l in range(1, n))
    return KalmanResult(K, rank, det, closed)


def modal_change_of_basis(params: SystemParams, k: int):
    """Columns are the unnormalized eigenvectors (Vandermonde in r_j)."""
    if params.alpha_sign == 0:
        raise AlphaZero("the Vandermonde basis change needs alpha != 0")
    n = params.n
    with mp.workdps(params.precision):
        W = mp.matrix(n, n)
        for j in range(n):
            v = unnormalized_vector(params, j, k)
            for l in range(n):
                W[l, j] = v[l]
        Winv = mp.inverse(W)
    return W, Winv
