from fractions import Fraction

import mpmath as mp
import pytest
from hypothesis import given, settings, strategies as st

from jordanctl.errors import AlphaZero, InvalidDimension, InvalidParameter
from jordanctl.model import (EigenPair, SystemParams, build_matrices, compute_spectrum,
                             eigen_residual, kalman_matrix, modal_change_of_basis,
                             resonance_index)


def _entries(M):
    return [[complex(M[i, j]) for j in range(M.cols)] for i in range(M.rows)]


def test_matrices_small_case():
    m = build_matrices(SystemParams(2, 1, 3))
    assert _entries(m.D) == [[1, 1], [0, 1]]
    assert _entries(m.A) == [[0, 0], [3, 0]]
    assert _entries(m.B) == [[0], [1]]
    assert m.beta == pytest.approx(0.5, abs=1e-30)


def test_matrices_alpha_zero():
    m = build_matrices(SystemParams(3, 2, 0))
    assert _entries(m.A) == [[0] * 3] * 3
    assert _entries(m.D) == [[2, 1, 0], [0, 2, 1], [0, 0, 2]]


def test_build_matrices_returns_independent_copies():
    p = SystemParams(2, 1, 3)
    m = build_matrices(p)
    m.D[0, 0] = 99
    assert build_matrices(p).D[0, 0] == 1


def test_invalid_parameters():
    with pytest.raises(InvalidDimension):
        SystemParams(1, 1, 0)
    with pytest.raises(InvalidParameter):
        SystemParams(2, Fraction(1, 2), 0)


def test_spectrum_closed_form_values():
    s = compute_spectrum(SystemParams(2, 1, 1), 3)
    assert s[(0, 1)].lam == 2
    assert s[(1, 1)].lam == 0


def test_alpha_zero_chain():
    s = compute_spectrum(SystemParams(2, 1, 0), 3)
    pair = s[(0, 3)]
    assert pair.lam == 9
    assert [float(abs(c)) for c in pair.V] == [0, 1]
    assert [[float(c) for c in e] for e in pair.chain] == [[1, 0]]


def test_negative_alpha_branch_hits_zero_shift():
    s = compute_spectrum(SystemParams(3, 1, -1), 2)
    assert abs(s[(1, 1)].lam) < mp.mpf(10) ** -40


def test_residual_small_for_exact_pair_and_large_when_perturbed():
    p = SystemParams(3, 2, 5)
    pair = compute_spectrum(p, 4)[(2, 3)]
    assert eigen_residual(p, pair) <= mp.mpf(10) ** -(p.precision - 10)
    V = list(pair.V)
    V[1] += mp.mpf("1e-3")
    assert eigen_residual(p, EigenPair(2, 3, pair.lam, V)) > 1e-4


def test_residual_alpha_zero_exact():
    p = SystemParams(4, 3, 0)
    assert eigen_residual(p, compute_spectrum(p, 2)[(0, 2)]) == 0


def test_eigenvectors_normalized():
    p = SystemParams(4, 1, -2)
    for pair in compute_spectrum(p, 5):
        with mp.workdps(p.precision):
            assert abs(mp.fsum(abs(c) ** 2 for c in pair.V) - 1) < 1e-40
            first = next(c for c in pair.V if c != 0)
        assert first.imag == 0 and first.real > 0


@pytest.mark.parametrize("n,k,det", [(2, 2, 4), (3, 1, 1)])
def test_kalman_examples(n, k, det):
    res = kalman_matrix(SystemParams(n, 1, 2), k)
    assert res.rank == n
    assert abs(res.abs_det - det) < 1e-30
    assert abs(res.closed_form - det) < 1e-30


def test_kalman_full_rank_distributed():
    assert kalman_matrix(SystemParams(2, 1, 7), 1).rank == 2


def test_change_of_basis_examples():
    W, Winv = modal_change_of_basis(SystemParams(2, 1, 1), 1)
    assert _entries(W) == [[1, 1], [1, -1]]
    W3, _ = modal_change_of_basis(SystemParams(3, 1, 1), 1)
    assert abs(mp.det(W3)) == pytest.approx(3 ** 1.5, rel=1e-12)
    with pytest.raises(AlphaZero):
        modal_change_of_basis(SystemParams(2, 1, 0), 1)


def test_resonance_detection_exact():
    assert resonance_index(SystemParams(2, 1, 4)) == 2
    assert resonance_index(SystemParams(2, 2, 36)) == 3
    assert resonance_index(SystemParams(2, 1, 2)) is None
    assert resonance_index(SystemParams(2, Fraction(3, 2), Fraction(9, 4))) == 1


def test_resonant_collisions_listed():
    s = compute_spectrum(SystemParams(2, 1, 4), 10)
    pairs = {tuple(sorted(c)) for c in s.collisions}
    for k in range(1, 9):
        assert ((0, k), (1, k + 2)) in pairs
    # 1 + 2*1 = 9 - 2*3
    assert s[(0, 1)].lam == s[(1, 3)].lam == 3


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 6), d=st.integers(1, 3), alpha=st.integers(-5, 5),
       k=st.integers(1, 30))
def test_branch_equation_property(n, d, alpha, k):
    p = SystemParams(n, d, alpha, precision=30)
    s = compute_spectrum(p, k)
    with mp.workdps(30):
        for pair in s:
            if pair.k != k:
                continue
            z = pair.lam - d * k * k
            assert abs(z ** n - alpha * mp.mpf(k) ** (2 * n - 2)) <= 1e-20 * max(1, abs(alpha)) * k ** (2 * n)
            assert eigen_residual(p, pair) <= 1e-18 * max(1, abs(pair.lam))
