import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_factorization
from nmfsfs.model import Factorization, ShapeError
from nmfsfs.rank2 import mixing_matrix, rank2_sfs, rank2_solution


def _feasible(P, E, a, b, tol=1e-12):
    B = mixing_matrix(a, b)
    Pt = P @ B
    Et = np.linalg.solve(B, E)
    return Pt.min() >= -tol and Et.min() >= -tol * max(1.0, E.max()), Pt, Et


def test_identity_basis_example():
    # P = I: no room to mix P columns outward, E rows can trade mass up to the point they vanish
    F = Factorization(np.eye(2), [[1.0, 3.0], [1.0, 1.0]])
    sfs = rank2_sfs(F)
    assert (sfs.interval_12.lo, sfs.interval_12.hi) == (0.0, pytest.approx(0.25))
    assert (sfs.interval_21.lo, sfs.interval_21.hi) == (0.0, pytest.approx(0.5))
    np.testing.assert_allclose(sfs.envelope.P_min, [[0.75, 0.0], [0.0, 0.5]])
    np.testing.assert_allclose(sfs.envelope.P_max, [[1.0, 0.5], [0.25, 1.0]])


def test_identity_with_flat_exposures():
    sfs = rank2_sfs(Factorization(np.eye(2), np.ones((2, 2))))
    assert (sfs.interval_12.lo, sfs.interval_12.hi) == (0.0, 0.5)
    assert (sfs.interval_21.lo, sfs.interval_21.hi) == (0.0, 0.5)


def test_overlapping_columns_with_diagonal_exposures():
    F = Factorization([[0.8, 0.2], [0.2, 0.8]], [[10.0, 0.0], [0.0, 10.0]])
    sfs = rank2_sfs(F)
    assert sfs.interval_12.lo == pytest.approx(-1 / 3) and sfs.interval_12.hi == 0.0
    # column 1 runs from P_1 (lambda = 0) out to (1, 0) (lambda = -1/3)
    assert sfs.envelope.P_min[0, 0] == pytest.approx(0.8)
    assert sfs.envelope.P_max[0, 0] == pytest.approx(1.0)


def test_separable_rank2_is_a_point():
    P = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]) * 0.5 + np.array([[0, 0], [0, 0], [0.5, 0.5]])
    E = np.array([[2.0, 0.0, 1.0], [0.0, 3.0, 1.0]])
    sfs = rank2_sfs(Factorization(P, E))
    assert sfs.envelope.avg_size_P == 0.0 and sfs.envelope.avg_size_E == 0.0


def test_rank2_rejects_other_ranks():
    with pytest.raises(ShapeError):
        rank2_sfs(random_factorization(np.random.default_rng(0), 5, 4, 3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_corner_envelope_matches_brute_force_grid(seed):
    r = np.random.default_rng(seed)
    F = random_factorization(r, int(r.integers(2, 8)), int(r.integers(2, 7)), 2)
    P, E = np.asarray(F.P), np.asarray(F.E)
    sfs = rank2_sfs(F)
    i12, i21 = sfs.interval_12, sfs.interval_21
    n = 61
    pad12, pad21 = 0.05 * max(i12.width, 1e-3), 0.05 * max(i21.width, 1e-3)
    As = np.linspace(i12.lo - pad12, min(i12.hi + pad12, 0.999), n)
    Bs = np.linspace(i21.lo - pad21, min(i21.hi + pad21, 0.999), n)
    Pmin, Pmax = np.full(P.shape, np.inf), np.full(P.shape, -np.inf)
    Emin, Emax = np.full(E.shape, np.inf), np.full(E.shape, -np.inf)
    for a in As:
        for b in Bs:
            # past a + b = 1 the columns swap places: a relabelled copy, not a new solution
            if 1 - a - b < 1e-9:
                continue
            ok, Pt, Et = _feasible(P, E, a, b)
            inside = i12.lo <= a <= i12.hi and i21.lo <= b <= i21.hi
            assert ok == inside, (a, b)
            if ok:
                Pmin, Pmax = np.minimum(Pmin, Pt), np.maximum(Pmax, Pt)
                Emin, Emax = np.minimum(Emin, Et), np.maximum(Emax, Et)
    env = sfs.envelope
    # the grid hull sits inside the exact envelope and approaches it
    assert np.all(env.P_min <= Pmin + 1e-12) and np.all(env.P_max >= Pmax - 1e-12)
    escale = 1e-9 * max(1.0, E.max())
    assert np.all(env.E_min <= Emin + escale) and np.all(env.E_max >= Emax - escale)
    # P entries are affine in (a, b) with slope at most 1
    cell = max(As[1] - As[0], Bs[1] - Bs[0])
    assert np.abs(env.P_max - Pmax).max() < cell
    assert np.abs(env.P_min - Pmin).max() < cell


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_corners_are_feasible_and_just_outside_is_not(seed):
    r = np.random.default_rng(seed)
    F = random_factorization(r, 8, 6, 2)
    P, E = np.asarray(F.P), np.asarray(F.E)
    sfs = rank2_sfs(F)
    i12, i21 = sfs.interval_12, sfs.interval_21
    for a in (i12.lo, i12.hi):
        for b in (i21.lo, i21.hi):
            G = rank2_solution(F, a, b)
            np.testing.assert_allclose(G.P @ G.E, P @ E, rtol=1e-9, atol=1e-12)
    for iv, at in ((i12, lambda x: (x, 0.0)), (i21, lambda x: (0.0, x))):
        d = 1e-6 * (iv.hi - iv.lo + 1)
        for lam in (iv.lo - d, iv.hi + d):
            ok, Pt, Et = _feasible(P, E, *at(lam), tol=0.0)
            assert not ok and min(Pt.min(), Et.min()) < 0
