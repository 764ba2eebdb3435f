"""Exact/inexact number handling and certified irrational constants.

Parameters may be given as ``int``, ``Fraction`` or decimal/fraction strings
(treated as exact) or as ``float``/``mpf`` (treated as inexact).  Arithmetic
tests such as "is sqrt(alpha)/d a positive integer" use exact rational
arithmetic whenever possible.
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, Optional, Union

import mpmath as mp

Number = Union[int, float, Fraction, str, mp.mpf]


def exact(x) -> Optional[Fraction]:
    """Return ``x`` as a Fraction when it is an exact input, else None."""
    if isinstance(x, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except ValueError:
            return None
    return None


def to_mpf(x):
    """Convert a parameter to an mpf at the current working precision."""
    q = exact(x)
    if q is not None:
        return mp.mpf(q.numerator) / q.denominator
    if isinstance(x, str):
        return mp.mpf(x)
    return mp.mpf(x)


def is_square_fraction(q: Fraction) -> Optional[Fraction]:
    """Exact square root of a nonnegative Fraction, or None if irrational."""
    if q < 0:
        return None
    rn, rd = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if rn * rn == q.numerator and rd * rd == q.denominator:
        return Fraction(rn, rd)
    return None


def positive_integer_test(square, rel_tol: float = 1e-12):
    """Decide whether sqrt(square) is a positive integer.

    ``square`` is a Fraction (exact) or an mpf.  Returns ``(answer, m)``
    where ``answer`` is True, False or None (inside the tolerance band of an
    inexact input) and ``m`` is the candidate integer.
    """
    if isinstance(square, Fraction):
        root = is_square_fraction(square)
        if root is not None and root.denominator == 1 and root > 0:
            return True, int(root)
        return False, None
    if square <= 0:
        return False, None
    root = mp.sqrt(square)
    m = int(mp.nint(root))
    if m >= 1 and abs(root - m) <= rel_tol * max(1, abs(root)):
        return None, m
    return False, None


def digits_for_range(k_max: int) -> int:
    """Digit budget 2*log10(k_max) + 30 used for sin(k*theta*pi)."""
    return int(math.ceil(2 * math.log10(max(k_max, 1)))) + 30


class Irrational:
    """A real number in (0,1) certified irrational by construction."""

    def value(self, dps: int):
        raise NotImplementedError

    def one_minus(self) -> "Irrational":
        return _Reflected(self)

    def describe(self) -> str:
        raise NotImplementedError


class _Reflected(Irrational):
    def __init__(self, base: Irrational):
        self.base = base

    def value(self, dps: int):
        with mp.workdps(dps + 5):
            v = 1 - self.base.value(dps + 5)
        return +v

    def one_minus(self) -> Irrational:
        return self.base

    def describe(self) -> str:
        return f"1-({self.base.describe()})"


class Surd(Irrational):
    """(a + b*sqrt(c))/e with c a positive non-square integer and b != 0."""

    def __init__(self, a: int, b: int, c: int, e: int = 1):
        if c <= 0 or math.isqrt(c) ** 2 == c:
            raise ValueError("c must be a positive non-square integer")
        if b == 0 or e == 0:
            raise ValueError("b and e must be nonzero")
        self.a, self.b, self.c, self.e = int(a), int(b), int(c), int(e)

    @classmethod
    def parse(cls, text: str) -> "Surd":
        """Parse ``"a,b,c[,e]"``."""
        parts = [int(p) for p in text.split(",")]
        if len(parts) not in (3, 4):
            raise ValueError("surd must be 'a,b,c' or 'a,b,c,e'")
        return cls(*parts)

    def value(self, dps: int):
        with mp.workdps(dps + 10):
            v = (self.a + self.b * mp.sqrt(self.c)) / self.e
        return v

    def one_minus(self) -> "Surd":
        return Surd(self.e - self.a, -self.b, self.c, self.e)

    def describe(self) -> str:
        return f"({self.a}{self.b:+d}*sqrt({self.c}))/{self.e}"


class ContinuedFraction(Irrational):
    """[0; a1, a2, ...] with an infinite rule ``rule(i, p_prev, q_prev)``.

    The rule receives the index i >= 1 and the previous convergent
    p_{i-1}/q_{i-1} and must return a positive integer.  Irrationality is the
    caller's contract (the expansion never terminates).
    """

    def __init__(self, rule: Callable[[int, int, int], int], label: str = "cf"):
        self.rule = rule
        self.label = label

    @classmethod
    def periodic(cls, period) -> "ContinuedFraction":
        period = [int(a) for a in period]
        return cls(lambda i, p, q: period[(i - 1) % len(period)],
                   label=f"[0;({','.join(map(str, period))})]")

    def convergents(self, count: int):
        """First ``count`` convergents (p_i, q_i), i = 1..count."""
        p_prev, q_prev, p, q = 1, 0, 0, 1
        out = []
        for i in range(1, count + 1):
            a = int(self.rule(i, p, q))
            if a < 1:
                raise ValueError("partial quotients must be positive")
            p_prev, q_prev, p, q = p, q, a * p + p_prev, a * q + q_prev
            out.append((p, q))
        return out

    def value(self, dps: int):
        # |theta - p_i/q_i| < 1/q_i^2, stop once that is below 10^-(dps+5)
        p_prev, q_prev, p, q = 1, 0, 0, 1
        i = 0
        target = 10 ** (dps + 5)
        while q * q <= target:
            i += 1
            a = int(self.rule(i, p, q))
            p_prev, q_prev, p, q = p, q, a * p + p_prev, a * q + q_prev
        with mp.workdps(dps + 10):
            return mp.mpf(p) / q

    def describe(self) -> str:
        return self.label


def theta_value(theta, dps: int):
    """Evaluate a theta specification (Irrational, Fraction, str or mpf)."""
    if isinstance(theta, Irrational):
        return theta.value(dps)
    q = exact(theta)
    with mp.workdps(dps + 10):
        if q is not None:
            return mp.mpf(q.numerator) / q.denominator
        return mp.mpf(theta)
