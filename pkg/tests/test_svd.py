import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_factorization
from nmfsfs.model import ShapeError
from nmfsfs.sampler import SamplerConfig, run_sampler
from nmfsfs.svd import (
    InfeasibleSolutionError,
    T_from_alpha,
    T_of_E,
    T_of_P,
    alpha_of_E,
    alpha_of_P,
    cloud_bbox_area,
    reconstruct_from_alpha,
    truncated_svd,
)


def test_diagonal_example():
    svd = truncated_svd(np.diag([3.0, 2.0]), 2)
    np.testing.assert_allclose(svd.sigma, [3.0, 2.0])
    np.testing.assert_allclose(np.abs(svd.U), np.eye(2))
    np.testing.assert_allclose(svd.matrix(), np.diag([3.0, 2.0]))


def test_rank_one_singular_value():
    u, v = np.array([1.0, 2.0, 2.0]), np.array([3.0, 4.0])
    svd = truncated_svd(np.outer(u, v), 1)
    assert svd.sigma[0] == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v))
    assert np.all(svd.U > 0) and np.all(svd.V > 0)


def test_rank_too_high_is_rejected():
    with pytest.raises(ShapeError):
        truncated_svd(np.outer([1.0, 2.0], [1.0, 1.0]), 2)
    with pytest.raises(ShapeError):
        truncated_svd(np.ones((3, 2)), 3)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_eckart_young(seed, N):
    r = np.random.default_rng(seed)
    X = r.uniform(size=(9, 7))
    svd = truncated_svd(X, N)
    s = np.linalg.svd(X, compute_uv=False)
    assert np.linalg.norm(X - svd.matrix()) == pytest.approx(np.sqrt((s[N:] ** 2).sum()), rel=1e-9)
    # orthonormal factors
    np.testing.assert_allclose(svd.U.T @ svd.U, np.eye(N), atol=1e-12)
    np.testing.assert_allclose(svd.V.T @ svd.V, np.eye(N), atol=1e-12)


def _setup(rng, K=12, G=9, N=3):
    F = random_factorization(rng, K, G, N)
    svd = truncated_svd(np.asarray(F.P) @ np.asarray(F.E), N, reference_P=F.P)
    return F, svd


def test_first_row_of_T_is_positive(rng):
    F, svd = _setup(rng)
    assert np.all((svd.U.T @ np.asarray(F.P))[0] > 0)


def test_round_trip_P_side(rng):
    F, svd = _setup(rng)
    T = T_of_P(svd, F.P)
    np.testing.assert_allclose(T[0], 1.0)
    G = reconstruct_from_alpha(svd, T)
    np.testing.assert_allclose(G.P, F.P, atol=1e-12)
    np.testing.assert_allclose(G.E, F.E, atol=1e-10 * np.abs(F.E).max())
    # and through alpha
    alpha = alpha_of_P(svd, F.P).points
    np.testing.assert_allclose(T_from_alpha(alpha), T)


def test_scale_invariance(rng):
    F, svd = _setup(rng)
    D = np.diag([0.5, 3.0, 7.0])
    np.testing.assert_allclose(alpha_of_P(svd, np.asarray(F.P) @ D).points,
                               alpha_of_P(svd, F.P).points, atol=1e-12)
    np.testing.assert_allclose(alpha_of_E(svd, D @ np.asarray(F.E)).points,
                               alpha_of_E(svd, F.E).points, atol=1e-10)


def test_permutation_equivariance(rng):
    F, svd = _setup(rng)
    perm = [2, 0, 1]
    a = alpha_of_P(svd, F.P).points
    b = alpha_of_P(svd, np.asarray(F.P)[:, perm]).points
    np.testing.assert_allclose(b, a[perm], atol=1e-12)


def test_duality_between_sides(rng):
    F, svd = _setup(rng)
    TP = T_of_P(svd, F.P)
    TE = T_of_E(svd, F.E)
    D = TE @ TP
    np.testing.assert_allclose(D - np.diag(np.diag(D)), 0.0, atol=1e-10 * np.abs(D).max())


def test_stacked_input_matches_single(rng):
    F, svd = _setup(rng)
    chain, _ = run_sampler(F, SamplerConfig(check_every=50, max_iterations=200))
    cloud = alpha_of_P(svd, chain.samples_P)
    assert len(cloud) == len(chain) * 3
    np.testing.assert_allclose(cloud.points[-3:], alpha_of_P(svd, chain.samples_P[-1]).points)
    # every sampled solution reconstructs from its coordinates
    for s in range(0, len(chain), 40):
        T = T_of_P(svd, chain.samples_P[s])
        G = reconstruct_from_alpha(svd, T)
        np.testing.assert_allclose(G.P, chain.samples_P[s], atol=1e-9)


def test_infeasible_perturbation_is_detected(rng):
    F, svd = _setup(rng)
    T = T_of_P(svd, F.P)
    # push one component far outside the data cone
    bad = T.copy()
    bad[1:, 0] += 50 * (1 + np.abs(T[1:, 0]))
    with pytest.raises(InfeasibleSolutionError):
        reconstruct_from_alpha(svd, bad)
    with pytest.raises(InfeasibleSolutionError):
        reconstruct_from_alpha(svd, T_from_alpha(np.zeros((3, 2))))


def test_bbox_area():
    from nmfsfs.svd import AlphaCloud
    cloud = AlphaCloud(np.array([[0, 0], [1, 2], [5, 5], [5, 6.0]]),
                       np.array([0, 0, 1, 1]), np.array([0, 1, 0, 1]), "P")
    assert cloud_bbox_area(cloud) == pytest.approx(2.0)
