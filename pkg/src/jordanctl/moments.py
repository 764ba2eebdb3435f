"""Minimal-norm biorthogonal families to (generalized) exponentials.

Family members are p_i(t) = t^{j_i} exp(-L_i t) on (0, T).  The biorthogonal
family q_m = sum_i C[i, m] p_i satisfies  int_0^T p_k conj(q_m) dt = delta_km,
which is G conj(C) = I for the Gram matrix G[k, m] = int p_k conj(p_m).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import mpmath as mp

from .errors import DegenerateExponents, IllConditioned, InvalidParameter
from .model import SystemParams


def laplace_moment(p: int, s, T):
    """I_p(s) = int_0^T t^p e^{-s t} dt in closed form.

    Upward recursion I_p = (p/s) I_{p-1} - T^p e^{-sT}/s when |sT| is large;
    a convergent power series in sT otherwise (the recursion cancels there).
    """
    if s == 0:
        return mp.mpf(T) ** (p + 1) / (p + 1)
    sT = s * T
    if abs(sT) < 1:
        total, term, n = mp.mpf(0), mp.mpf(1), 0
        # sum_n (-sT)^n / (n! (p+n+1)) * T^{p+1}
        while True:
            add = term / (p + n + 1)
            total += add
            if abs(add) < mp.eps * abs(total) / 16 and n > 2:
                break
            n += 1
            term *= -sT / n
        return total * mp.mpf(T) ** (p + 1)
    e = mp.exp(-sT)
    val = (1 - e) / s
    for q in range(1, p + 1):
        val = (q * val - mp.mpf(T) ** q * e) / s
    return val


def laplace_moment_gamma(p: int, s, T):
    """Same integral through the lower incomplete gamma function."""
    if s == 0:
        return mp.mpf(T) ** (p + 1) / (p + 1)
    return mp.gammainc(p + 1, 0, s * T) / s ** (p + 1)


@dataclass
class ExponentFamily:
    exponents: List
    T: float
    precision: int = 300
    eta: Sequence[int] = ()
    labels: Optional[List] = None

    def __post_init__(self):
        with mp.workdps(self.precision):
            self.exponents = [mp.mpc(z) for z in self.exponents]
            self.T = mp.mpf(self.T)
        if not self.eta:
            self.eta = [1] * len(self.exponents)
        elif isinstance(self.eta, int):
            self.eta = [self.eta] * len(self.exponents)
        self.eta = [int(e) for e in self.eta]
        if len(self.eta) != len(self.exponents):
            raise InvalidParameter("eta must give one multiplicity per exponent")
        if self.T <= 0:
            raise InvalidParameter("T must be positive")
        for z in self.exponents:
            if z.real <= 0:
                raise InvalidParameter(f"exponent {z} must have positive real part")
        with mp.workdps(self.precision):
            tol = mp.mpf(10) ** (-(self.precision - 8))
            for a in range(len(self.exponents)):
                for b in range(a + 1, len(self.exponents)):
                    za, zb = self.exponents[a], self.exponents[b]
                    if abs(za - zb) <= tol * max(1, abs(za)):
                        raise DegenerateExponents(f"exponents {a} and {b} coincide")
        if self.labels is None:
            self.labels = list(range(len(self.exponents)))

    def basis(self) -> List[Tuple[object, int]]:
        """Expanded basis: (exponent, power j) for each p_i^{(j)}."""
        return [(z, j) for z, e in zip(self.exponents, self.eta) for j in range(e)]

    def basis_labels(self) -> list:
        """Labels of the expanded basis: plain labels when every eta is 1,
        else (power j, label)."""
        if all(e == 1 for e in self.eta):
            return list(self.labels)
        return [(j, lab) for lab, e in zip(self.labels, self.eta) for j in range(e)]

    def __len__(self):
        return sum(self.eta)


@dataclass
class BiorthogonalFamily:
    family: ExponentFamily
    coeffs: mp.matrix
    gram_condition: mp.mpf
    residual: mp.mpf
    gram: mp.matrix = field(repr=False, default=None)

    def evaluate(self, m: int, t):
        """q_m(t)."""
        with mp.workdps(self.family.precision):
            return mp.fsum(self.coeffs[i, m] * t ** j * mp.exp(-z * t)
                           for i, (z, j) in enumerate(self.family.basis()))

    def to_record(self) -> dict:
        fam = self.family
        dps = fam.precision
        n = len(fam)
        return {
            "exponents": [[mp.nstr(z.real, dps), mp.nstr(z.imag, dps)] for z in fam.exponents],
            "eta": list(fam.eta),
            "T": mp.nstr(fam.T, dps),
            "precision": dps,
            "coeffs": [[[mp.nstr(self.coeffs[i, m].real, dps), mp.nstr(self.coeffs[i, m].imag, dps)]
                        for m in range(n)] for i in range(n)],
            "residual": mp.nstr(self.residual, 10),
            "gram_condition": mp.nstr(self.gram_condition, 10),
        }


def gram_matrix(family: ExponentFamily, integral=laplace_moment) -> mp.matrix:
    basis = family.basis()
    N = len(basis)
    with mp.workdps(family.precision):
        G = mp.matrix(N, N)
        for a, (za, ja) in enumerate(basis):
            for b in range(a, N):
                zb, jb = basis[b]
                s = za + mp.conj(zb)
                if s == 0:
                    raise DegenerateExponents(f"L_{a} + conj(L_{b}) = 0")
                val = integral(ja + jb, s, family.T)
                G[a, b] = val
                G[b, a] = mp.conj(val)
        for a in range(N):
            G[a, a] = mp.mpc(G[a, a].real, 0)
    return G


def _cholesky_solve_identity(G: mp.matrix):
    """G^{-1} via Cholesky (raises if G is not numerically positive)."""
    N = G.rows
    L = mp.cholesky(G)
    inv = mp.matrix(N, N)
    for m in range(N):
        y = [mp.mpc(0)] * N
        for i in range(N):
            acc = (1 if i == m else 0) - mp.fsum(L[i, r] * y[r] for r in range(i))
            y[i] = acc / L[i, i]
        x = [mp.mpc(0)] * N
        for i in reversed(range(N)):
            acc = y[i] - mp.fsum(mp.conj(L[r, i]) * x[r] for r in range(i + 1, N))
            x[i] = acc / mp.conj(L[i, i])
        for i in range(N):
            inv[i, m] = x[i]
    return L, inv


def _norm1(M: mp.matrix):
    return max(mp.fsum(abs(M[i, j]) for i in range(M.rows)) for j in range(M.cols))


def biortho(family: ExponentFamily) -> BiorthogonalFamily:
    with mp.workdps(family.precision):
        G = gram_matrix(family)
        try:
            _, Ginv = _cholesky_solve_identity(G)
        except (ZeroDivisionError, ValueError) as exc:
            raise IllConditioned(
                f"Gram factorization failed ({exc}); raise the precision") from exc
        cond = _norm1(G) * _norm1(Ginv)
        if cond > mp.mpf(10) ** (family.precision - 10):
            raise IllConditioned(
                f"Gram condition {mp.nstr(cond, 5)} exceeds 1e{family.precision - 10};"
                " raise the precision")
        N = G.rows
        C = mp.matrix(N, N)
        for i in range(N):
            for m in range(N):
                C[i, m] = mp.conj(Ginv[i, m])
        bio = BiorthogonalFamily(family, C, cond, mp.mpf(0), G)
        bio.residual = biorthogonality_residual(bio)
    return bio


def biorthogonality_residual(bio: BiorthogonalFamily):
    """max |int p_k conj(q_m) - delta_km| from an independent Gram evaluation."""
    fam = bio.family
    with mp.workdps(fam.precision):
        H = gram_matrix(fam, integral=laplace_moment_gamma)
        N = H.rows
        worst = mp.mpf(0)
        for k in range(N):
            for m in range(N):
                val = mp.fsum(H[k, i] * mp.conj(bio.coeffs[i, m]) for i in range(N))
                worst = max(worst, abs(val - (1 if k == m else 0)))
    return worst


def norm_profile(bio: BiorthogonalFamily):
    """[(||q_m||, log||q_m|| / Re L_m)] from the Gram quadratic form."""
    fam = bio.family
    G = bio.gram if bio.gram is not None else gram_matrix(fam)
    basis = fam.basis()
    N = len(basis)
    out = []
    with mp.workdps(fam.precision):
        for m in range(N):
            c = [bio.coeffs[i, m] for i in range(N)]
            sq = mp.fsum(mp.conj(c[a]) * G[a, b] * c[b] for a in range(N) for b in range(N))
            nrm = mp.sqrt(abs(sq.real) if isinstance(sq, mp.mpc) else abs(sq))
            out.append((nrm, mp.log(nrm) / basis[m][0].real))
    return out


def reduction_matrix(params: SystemParams, k: int) -> mp.matrix:
    """Lower-bidiagonal A_k: diag d k^{2j}/j!, subdiag -k^{2(j-1)}/(j-1)!."""
    n = params.n
    with mp.workdps(params.precision):
        d = params.d_mp()
        A = mp.zeros(n, n)
        for j in range(n):
            A[j, j] = d * mp.mpf(k) ** (2 * j) / mp.factorial(j)
            if j:
                A[j, j - 1] = -mp.mpf(k) ** (2 * (j - 1)) / mp.factorial(j - 1)
    return A


def triangular_reduce(params: SystemParams, k: int, Mtilde) -> list:
    """Solve A_k M = Mtilde by forward substitution."""
    n = params.n
    if len(Mtilde) != n:
        raise InvalidParameter("Mtilde must have n entries")
    A = reduction_matrix(params, k)
    out = []
    with mp.workdps(params.precision):
        for j in range(n):
            acc = Mtilde[j]
            if j:
                acc = acc - A[j, j - 1] * out[j - 1]
            out.append(acc / A[j, j])
    return out
