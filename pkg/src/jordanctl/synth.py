"""Moment targets for each setting and control assembly.

Conventions.  A state is a finite sum y = sum_k yhat_k w_k with
w_k = sqrt(2/pi) sin(kx); pairings are hermitian in the second slot,
<y, phi> = sum_k (yhat_k, phihat_k)_{C^n}.  A control is stored as

    v(t) = sum_i c_i (T - t)^{deg_i} exp(-mu_i (T - t)),

so every moment int_0^T v(T-s) s^j exp(-z s) ds is a finite sum of
closed-form Laplace moments.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import mpmath as mp

from .arith import theta_value
from .criteria import check_BDV
from .errors import (AlphaZero, IncompatibleInitialState, IndexMismatch,
                     InvalidParameter, NonControllableMode, VanishingSine,
                     VanishingVB)
from .model import SystemParams, Spectrum, compute_spectrum, resonance_index
from .moments import (BiorthogonalFamily, ExponentFamily, biortho,
                      laplace_moment, triangular_reduce)


@dataclass
class InitialState:
    n: int
    coeffs: Dict[int, List]
    space: str = "Hminus1"

    def __post_init__(self):
        if self.space not in ("Hminus1", "L2"):
            raise InvalidParameter("space must be 'Hminus1' or 'L2'")
        clean = {}
        for k, v in sorted(self.coeffs.items()):
            if int(k) < 1 or len(v) != self.n:
                raise InvalidParameter(f"bad mode {k}: need k >= 1 and {self.n} entries")
            clean[int(k)] = [mp.mpc(c) for c in v]
        self.coeffs = clean

    @classmethod
    def zero(cls, n: int, space: str = "Hminus1") -> "InitialState":
        return cls(n, {}, space)

    @classmethod
    def random(cls, n: int, modes: Iterable[int], seed: int = 0, complex_values: bool = False,
               space: str = "Hminus1") -> "InitialState":
        rng = random.Random(seed)
        coeffs = {}
        for k in modes:
            if complex_values:
                coeffs[k] = [mp.mpc(rng.uniform(-1, 1), rng.uniform(-1, 1)) for _ in range(n)]
            else:
                coeffs[k] = [mp.mpf(rng.uniform(-1, 1)) for _ in range(n)]
        return cls(n, coeffs, space)

    @property
    def support(self) -> List[int]:
        return sorted(self.coeffs)

    def mode(self, k: int) -> List:
        return self.coeffs.get(k, [mp.mpc(0)] * self.n)

    def is_real(self) -> bool:
        return all(c.imag == 0 for v in self.coeffs.values() for c in v)

    def norm_hminus1(self):
        return mp.sqrt(mp.fsum(abs(c) ** 2 / k ** 2 for k, v in self.coeffs.items() for c in v))

    def norm_l2(self):
        return mp.sqrt(mp.fsum(abs(c) ** 2 for v in self.coeffs.values() for c in v))

    def norm(self):
        return self.norm_hminus1() if self.space == "Hminus1" else self.norm_l2()

    def __add__(self, other: "InitialState") -> "InitialState":
        keys = sorted(set(self.coeffs) | set(other.coeffs))
        return InitialState(self.n, {k: [a + b for a, b in zip(self.mode(k), other.mode(k))]
                                     for k in keys}, self.space)

    def scale(self, c) -> "InitialState":
        return InitialState(self.n, {k: [c * a for a in v] for k, v in self.coeffs.items()},
                            self.space)

    def to_record(self, dps: int = 50) -> dict:
        return {"n": self.n, "space": self.space,
                "coeffs": [{"k": k, "values": [[mp.nstr(c.real, dps), mp.nstr(c.imag, dps)]
                                               for c in v]} for k, v in self.coeffs.items()]}

    @classmethod
    def from_record(cls, rec: dict) -> "InitialState":
        coeffs = {int(e["k"]): [mp.mpc(mp.mpf(re), mp.mpf(im)) for re, im in e["values"]]
                  for e in rec["coeffs"]}
        return cls(int(rec["n"]), coeffs, rec.get("space", "Hminus1"))


@dataclass
class ControlSignal:
    T: object
    shift: object = 0
    terms: List[Tuple[object, int, object]] = field(default_factory=list)
    samples: Optional[Tuple[List, List]] = None
    precision: int = 50

    def __call__(self, t):
        with mp.workdps(self.precision):
            s = self.T - mp.mpf(t)
            return mp.fsum(c * s ** j * mp.exp(-mu * s) for mu, j, c in self.terms)

    def real_part(self, t):
        return mp.re(self(t))

    @property
    def norm_L2(self):
        """Exact ||v||_{L^2(0,T)} from the Gram form of the terms."""
        with mp.workdps(self.precision):
            tot = mp.fsum(ca * mp.conj(cb) * laplace_moment(ja + jb, ma + mp.conj(mb), self.T)
                          for ma, ja, ca in self.terms for mb, jb, cb in self.terms)
            return mp.sqrt(abs(mp.re(tot)))

    def moment(self, z, j: int = 0):
        """int_0^T v(T-s) s^j exp(-z s) ds."""
        with mp.workdps(self.precision):
            return mp.fsum(c * laplace_moment(deg + j, mu + z, self.T) for mu, deg, c in self.terms)

    def sample(self, count: int) -> "ControlSignal":
        with mp.workdps(self.precision):
            ts = [self.T * i / (count - 1) for i in range(count)]
            vs = [self(t) for t in ts]
        return ControlSignal(self.T, self.shift, list(self.terms), (ts, vs), self.precision)

    def is_analytic(self) -> bool:
        return bool(self.terms) or self.samples is None

    def __add__(self, other: "ControlSignal") -> "ControlSignal":
        return ControlSignal(self.T, self.shift, self.terms + other.terms, None,
                             max(self.precision, other.precision))

    def scale(self, c) -> "ControlSignal":
        return ControlSignal(self.T, self.shift, [(mu, j, c * a) for mu, j, a in self.terms],
                             None, self.precision)

    def to_record(self) -> dict:
        dps = self.precision
        rec = {"T": mp.nstr(mp.mpf(self.T), dps), "shift": mp.nstr(mp.mpf(self.shift), dps),
               "precision": dps,
               "terms": [[mp.nstr(mp.re(mu), dps), mp.nstr(mp.im(mu), dps), int(j),
                          mp.nstr(mp.re(c), dps), mp.nstr(mp.im(c), dps)]
                         for mu, j, c in self.terms]}
        if self.samples is not None:
            ts, vs = self.samples
            rec["samples"] = [[mp.nstr(t, 20), mp.nstr(mp.re(v), 20), mp.nstr(mp.im(v), 20)]
                              for t, v in zip(ts, vs)]
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "ControlSignal":
        dps = int(rec.get("precision", 50))
        with mp.workdps(dps):
            terms = [(mp.mpc(mp.mpf(a), mp.mpf(b)), int(j), mp.mpc(mp.mpf(c), mp.mpf(d)))
                     for a, b, j, c, d in rec["terms"]]
            samples = None
            if "samples" in rec:
                samples = ([mp.mpf(t) for t, _, _ in rec["samples"]],
                           [mp.mpc(mp.mpf(a), mp.mpf(b)) for _, a, b in rec["samples"]])
            return cls(mp.mpf(rec["T"]), mp.mpf(rec["shift"]), terms, samples, dps)


def spectral_shift(params: SystemParams, spectrum: Spectrum, eps0=1):
    """M = max(0, eps0 - min Re lambda) and the shifted eigenvalues."""
    with mp.workdps(params.precision):
        lo = min(p.lam.real for p in spectrum)
        M = max(mp.mpf(0), eps0 - lo)
        shifted = {idx: p.lam + M for idx, p in spectrum.pairs.items()}
    return M, shifted


def _pair(u, V):
    """(u, V)_{C^n}, hermitian in the second slot."""
    return mp.fsum(a * mp.conj(b) for a, b in zip(u, V))


def _vdb(params: SystemParams, V):
    """V^* D B = conj(V_{n-1}) + d conj(V_n)."""
    return mp.conj(V[-2]) + params.d_mp() * mp.conj(V[-1])


def moment_targets_boundary(params: SystemParams, spectrum: Spectrum, y0: InitialState,
                            K: int, skip: Sequence[Tuple[int, int]] = ()):
    if params.alpha_sign == 0:
        raise AlphaZero("use moment_targets_alpha0 for alpha = 0")
    out = {}
    with mp.workdps(params.precision):
        pref = mp.sqrt(mp.pi / 2)
        for (j, k), p in spectrum.pairs.items():
            if k > K or (j, k) in skip:
                continue
            den = _vdb(params, p.V)
            if abs(den) <= mp.mpf(10) ** (-(params.precision - 10)):
                raise NonControllableMode(j, k)
            out[(j, k)] = -pref / k * _pair(y0.mode(k), p.V) / den
    return out


def moment_targets_alpha0(params: SystemParams, y0: InitialState, K: int, T,
                          return_tilde: bool = False):
    """M~_{j,k} from the Jordan chain, then the triangular reduction."""
    if params.alpha_sign != 0:
        raise InvalidParameter("moment_targets_alpha0 needs alpha = 0")
    n = params.n
    out, tilde = {}, {}
    with mp.workdps(params.precision):
        T = mp.mpf(T)
        pref = mp.sqrt(mp.pi / 2)
        for k in range(1, K + 1):
            y = y0.mode(k)
            mt = []
            for j in range(n):
                acc = mp.fsum((-1) ** l * (k * k * T) ** (j - l) / mp.factorial(j - l)
                              * y[n - 1 - l] for l in range(j + 1))
                mt.append(-pref / k * acc)
            M = triangular_reduce(params, k, mt)
            for j in range(n):
                out[(j, k)] = M[j]
                tilde[(j, k)] = mt[j]
    return (out, tilde) if return_tilde else out


def pointwise_sines(theta, K: int, dps: int):
    th = theta_value(theta, dps + 10)
    with mp.workdps(dps + 10):
        vals = {k: mp.sinpi(k * th - mp.floor(k * th)) for k in range(1, K + 1)}
    return vals


def moment_targets_pointwise(params: SystemParams, spectrum: Spectrum, y0: InitialState,
                             theta, K: int):
    out = {}
    with mp.workdps(params.precision):
        sines = pointwise_sines(theta, K, params.precision)
        tol = mp.mpf(10) ** (-(params.precision - 10))
        pref = mp.sqrt(mp.pi / 2)
        for (j, k), p in spectrum.pairs.items():
            if k > K:
                continue
            s = sines[k]
            if abs(s) <= tol:
                raise VanishingSine(f"sin(k theta pi) = 0 at k = {k}")
            vb = mp.conj(p.V[-1])
            if abs(vb) <= tol:
                raise VanishingVB(f"V*B = 0 at (j={j}, k={k})")
            out[(j, k)] = -pref / s * _pair(y0.mode(k), p.V) / vb
    return out


# ----- resonant n = 2 subspace ------------------------------------------------

def _x_constraints(m: int, d, k_hi: int):
    """Rows (k, coefficient dict) of the three condition families."""
    a = mp.mpf(1) / (d * m)          # alpha^{-1/2}

    def v0(k):
        return {(k, 0): mp.mpf(1), (k, 1): a * k}

    def v1(k):
        return {(k, 0): mp.mpf(1), (k, 1): -a * k}

    rows = []
    m0 = 1 + (m - 1) // 2
    for k in range(1, m0):
        r = dict(v1(k))
        for key, val in v1(m - k).items():
            r[key] = r.get(key, 0) - val
        rows.append(("first", k, r))
    for k in range(1, k_hi + 1):
        r = dict(v0(k))
        if k + m <= k_hi:
            r.update(v1(k + m))
        rows.append(("second", k, r))
    if m <= k_hi:
        rows.append(("third", m, v1(m)))
    return rows


@dataclass
class MembershipReport:
    member: bool
    conditions: Dict[str, dict]


def subspace_X_check(y0: InitialState, m: int, d=1, k_hi: Optional[int] = None,
                     tol=None) -> MembershipReport:
    """Check the three families of linear conditions defining X on the support."""
    if y0.n != 2:
        raise InvalidParameter("the resonant subspace is defined for n = 2")
    if k_hi is None:
        k_hi = max(y0.support + [m])
    tol = mp.mpf(10) ** (-(mp.mp.dps - 10)) if tol is None else tol
    scale = max([mp.mpf(1)] + [abs(c) * k for k, v in y0.coeffs.items() for c in v])
    conds = {name: {"passed": True, "first_violation": None} for name in ("first", "second", "third")}
    for name, k, row in _x_constraints(m, d, k_hi + m):
        val = mp.fsum(c * y0.mode(kk)[comp] for (kk, comp), c in row.items())
        if abs(val) > tol * scale and conds[name]["passed"]:
            conds[name] = {"passed": False, "first_violation": k}
    return MembershipReport(all(c["passed"] for c in conds.values()), conds)


def project_onto_X(y0: InitialState, m: int, d=1, precision: Optional[int] = None) -> InitialState:
    """Euclidean projection of the coefficient vector onto X, support kept."""
    with mp.workdps(precision or mp.mp.dps):
        return _project(y0, m, mp.mpf(d) if not isinstance(d, mp.mpf) else d)


def _project(y0: InitialState, m: int, d) -> InitialState:
    ks = y0.support
    k_hi = max(ks + [m])
    keys = [(k, c) for k in range(1, k_hi + 1) for c in range(2)]
    pos = {key: i for i, key in enumerate(keys)}
    rows = [r for _, _, r in _x_constraints(m, d, k_hi)]
    C = mp.matrix(len(rows), len(keys))
    for i, r in enumerate(rows):
        for key, val in r.items():
            if key in pos:
                C[i, pos[key]] = val
    y = mp.matrix([y0.mode(k)[c] for k, c in keys])
    # y - C^T (C C^T)^+ C y; C has full row rank for these constraint families
    CCt = C * C.T
    lam = mp.lu_solve(CCt, C * y)
    z = y - C.T * lam
    coeffs = {k: [z[pos[(k, 0)]], z[pos[(k, 1)]]] for k in range(1, k_hi + 1)}
    return InitialState(2, coeffs, y0.space)


# ----- assembly and verification ---------------------------------------------

def assemble_control(targets: Dict, bio: BiorthogonalFamily, shift=0, T=None) -> ControlSignal:
    """v(T-s) = e^{M(T-s)} sum_m e^{-L_m T} M_m conj(q_m(s)) in exponential form."""
    fam = bio.family
    labels = fam.basis_labels()
    if set(labels) != set(targets):
        missing = set(labels) ^ set(targets)
        raise IndexMismatch(f"targets and family disagree on {sorted(missing, key=str)[:5]}")
    basis = fam.basis()
    N = len(basis)
    with mp.workdps(fam.precision):
        M = mp.mpf(shift)
        T = fam.T
        r = [mp.exp(-basis[m][0] * T) * targets[labels[m]] for m in range(N)]
        eMT = mp.exp(M * T)
        terms = []
        for i, (z, j) in enumerate(basis):
            c = mp.fsum(r[m] * mp.conj(bio.coeffs[i, m]) for m in range(N))
            terms.append((mp.conj(z) + M, j, eMT * c))
    return ControlSignal(T, M, terms, None, fam.precision)


def symmetrize(control: ControlSignal):
    """Pair conjugate exponents so that v is real; returns the relative defect."""
    with mp.workdps(control.precision):
        terms = list(control.terms)
        scale = max([mp.mpf(0)] + [abs(c) for _, _, c in terms]) or mp.mpf(1)
        tol = mp.mpf(10) ** (-(control.precision - 10)) * max(1, max(abs(mu) for mu, _, _ in terms) if terms else 1)
        used, defect = set(), mp.mpf(0)
        out = list(terms)
        for a, (mu, j, c) in enumerate(terms):
            if a in used:
                continue
            partner = None
            for b in range(a, len(terms)):
                if b in used:
                    continue
                mb, jb, _ = terms[b]
                if jb == j and abs(mb - mp.conj(mu)) <= tol:
                    partner = b
                    break
            if partner is None:
                raise InvalidParameter("exponents are not closed under conjugation")
            cb = terms[partner][2]
            defect = max(defect, abs(cb - mp.conj(c)) / scale)
            avg = (c + mp.conj(cb)) / 2
            if partner == a:
                out[a] = (mp.mpc(mu.real, 0), j, mp.mpc(avg.real, 0))
            else:
                out[a] = (mu, j, avg)
                out[partner] = (mp.conj(mu), j, mp.conj(avg))
            used.update({a, partner})
    return ControlSignal(control.T, control.shift, out, control.samples, control.precision), defect


@dataclass
class MomentReport:
    residuals: Dict
    max_abs: object
    max_scaled: object

    @property
    def worst(self):
        return max(self.max_abs, self.max_scaled)


def verify_moments(control: ControlSignal, exponents, targets: Dict) -> MomentReport:
    """Residuals of int v(T-s) s^j e^{-z s} ds = e^{-zT} M for (label, z, j).

    ``scaled`` is the residual in target units (multiplied back by e^{zT}).
    """
    res = {}
    with mp.workdps(control.precision):
        T = mp.mpf(control.T)
        for label, z, j in exponents:
            mom = control.moment(z, j)
            rhs = mp.exp(-z * T) * targets[label]
            a = abs(mom - rhs)
            res[label] = (a, abs(mom * mp.exp(z * T) - targets[label]))
        ma = max([r[0] for r in res.values()] + [mp.mpf(0)])
        ms = max([r[1] for r in res.values()] + [mp.mpf(0)])
    return MomentReport(res, ma, ms)


@dataclass
class SynthesisResult:
    control: ControlSignal
    targets: Dict
    exponents: List[Tuple[object, object, int]]
    bio: Optional[BiorthogonalFamily]
    shift: object
    report: MomentReport
    realness_defect: object = 0
    note: str = ""


def _finish(params, y0, targets, exps, fam_exps, fam_labels, eta, T, shift, precision,
            real: bool, note: str = "") -> SynthesisResult:
    if not fam_exps:
        ctrl = ControlSignal(mp.mpf(T), shift, [], None, precision)
        return SynthesisResult(ctrl, targets, exps, None, shift, verify_moments(ctrl, exps, targets))
    fam = ExponentFamily(fam_exps, T, precision, eta=eta, labels=fam_labels)
    bio = biortho(fam)
    fam_targets = {lab: targets[lab] for lab in fam.basis_labels()}
    ctrl = assemble_control(fam_targets, bio, shift)
    defect = mp.mpf(0)
    if real:
        ctrl, defect = symmetrize(ctrl)
    rep = verify_moments(ctrl, exps, targets)
    return SynthesisResult(ctrl, targets, exps, bio, shift, rep, defect, note)


def _resolve_shift(params, spec, shift):
    M, _ = spectral_shift(params, spec)
    if shift is None:
        return M
    with mp.workdps(params.precision):
        shift = mp.mpf(shift)
        lo = min(p.lam.real for p in spec)
        if lo + shift <= 0:
            raise InvalidParameter("the requested shift leaves exponents with Re <= 0")
    return shift


def synthesize_boundary(params: SystemParams, y0: InitialState, K: int, T,
                        shift=None) -> SynthesisResult:
    """Boundary null control for the first K mode families."""
    if params.alpha_sign == 0:
        return synthesize_alpha0(params, y0, K, T)
    if resonance_index(params) is not None:
        return synthesize_resonant(params, y0, K, T, shift)
    spec = compute_spectrum(params, K)
    if spec.collisions:
        raise InvalidParameter("eigenvalue collisions in range; the moment problem is degenerate")
    bad = check_BDV(params, spec)
    if bad:
        raise NonControllableMode(*bad[0])
    targets = moment_targets_boundary(params, spec, y0, K)
    M = _resolve_shift(params, spec, shift)
    with mp.workdps(params.precision):
        labels = list(targets)
        exps = [(lab, mp.conj(spec[lab].lam), 0) for lab in labels]
        fam_exps = [mp.conj(spec[lab].lam) + M for lab in labels]
    return _finish(params, y0, targets, exps, fam_exps, labels, 1, T, M, params.precision,
                   y0.is_real())


def synthesize_alpha0(params: SystemParams, y0: InitialState, K: int, T) -> SynthesisResult:
    targets = moment_targets_alpha0(params, y0, K, T)
    n = params.n
    with mp.workdps(params.precision):
        d = params.d_mp()
        lam = {k: d * k * k for k in range(1, K + 1)}
        exps = [((j, k), lam[k], j) for k in range(1, K + 1) for j in range(n)]
        fam_exps = [lam[k] for k in range(1, K + 1)]
    return _finish(params, y0, targets, exps, fam_exps, list(range(1, K + 1)), n, T, 0,
                   params.precision, y0.is_real())


def synthesize_pointwise(params: SystemParams, y0: InitialState, theta, K: int, T,
                         shift=None) -> SynthesisResult:
    spec = compute_spectrum(params, K)
    if spec.collisions:
        raise InvalidParameter("eigenvalue collisions in range")
    targets = moment_targets_pointwise(params, spec, y0, theta, K)
    M = _resolve_shift(params, spec, shift)
    with mp.workdps(params.precision):
        labels = list(targets)
        exps = [(lab, mp.conj(spec[lab].lam), 0) for lab in labels]
        fam_exps = [mp.conj(spec[lab].lam) + M for lab in labels]
    return _finish(params, y0, targets, exps, fam_exps, labels, 1, T, M, params.precision,
                   y0.is_real())


def synthesize_resonant(params: SystemParams, y0: InitialState, K: int, T,
                        shift=None) -> SynthesisResult:
    """n = 2, sqrt(alpha)/d = m: one moment equation per distinct eigenvalue."""
    m = resonance_index(params)
    if m is None:
        raise InvalidParameter("not a resonant n = 2 system")
    with mp.workdps(params.precision):
        report = subspace_X_check(y0, m, params.d_mp(), k_hi=K)
    if not report.member:
        raise IncompatibleInitialState("initial state is not in the resonant subspace X", report)
    spec = compute_spectrum(params, K)
    zero_mode = (1, m)
    with mp.workdps(params.precision):
        tol = mp.mpf(10) ** (-(params.precision - 12))
        skip = [zero_mode] if m <= K else []
        targets = moment_targets_boundary(params, spec, y0, K, skip=skip)
        parent = {idx: idx for idx in targets}

        def find(a):
            while parent[a] != a:
                a = parent[a]
            return a
        for a, b in spec.collisions:
            if a in parent and b in parent:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb, key=lambda x: (x[1], x[0]))] = min(
                        ra, rb, key=lambda x: (x[1], x[0]))
        reps = sorted({find(i) for i in targets}, key=lambda x: (x[1], x[0]))
        scale = max([mp.mpf(1)] + [abs(v) for v in targets.values()])
        for idx, val in targets.items():
            if abs(val - targets[find(idx)]) > tol * scale:
                raise IncompatibleInitialState(
                    f"targets of the coinciding modes {idx} and {find(idx)} differ", report)
        M = _resolve_shift(params, spec, shift)
        exps = [(lab, mp.conj(spec[lab].lam), 0) for lab in targets]
        fam_exps = [mp.conj(spec[lab].lam) + M for lab in reps]
    return _finish(params, y0, targets, exps, fam_exps, reps, 1, T, M, params.precision,
                   y0.is_real(), note=f"resonant m={m}; {len(targets) - len(reps)} merged modes")
