"""SVD-space coordinates of feasible solutions.

With ``PE = U S V'`` truncated to rank N, any feasible P̃ can be written
``P̃ = U T D`` for an N x N matrix T whose first row is all ones and a positive
diagonal D. The remaining N-1 entries of each column of T locate one
component in R^(N-1); for N = 3 the cloud is planar and can be plotted
directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CLAMP_TOL, Factorization, ShapeError

RANK_RTOL = 1e-12
FIRST_ROW_TOL = 1e-10


class InfeasibleSolutionError(ValueError):
    """A reconstruction from SVD coordinates leaves the nonnegative cone."""


@dataclass(frozen=True)
class TruncatedSvd:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    sign_convention: np.ndarray

    @property
    def rank(self):
        return len(self.sigma)

    def matrix(self):
        return (self.U * self.sigma) @ self.V.T


@dataclass
class AlphaCloud:
    """``points[m]`` is the location of component ``components[m]`` taken from
    sample ``sample_index[m]``."""

    points: np.ndarray
    components: np.ndarray
    sample_index: np.ndarray
    side: str

    def __len__(self):
        return len(self.points)

    def for_component(self, n):
        return self.points[self.components == n]


def truncated_svd(X, N, reference_P=None):
    """Rank-N SVD of X with deterministic column signs.

    Each column of U is flipped (with the matching V column) so its largest
    magnitude entry is positive. The first column is then oriented so the
    first row of ``U' reference_P`` is positive (when given), otherwise so
    that column sums to a positive number; for nonnegative X the two agree.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeError("X must be 2-D")
    if not np.all(np.isfinite(X)):
        raise ValueError("X must be finite")
    if not 1 <= N <= min(X.shape):
        raise ShapeError(f"N = {N} must be in [1, {min(X.shape)}]")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    U, s, V = U[:, :N], s[:N], Vt[:N].T
    if s[0] == 0 or s[-1] / s[0] < RANK_RTOL:
        raise ShapeError(
            f"X has numerical rank below {N} (sigma_N / sigma_1 = {s[-1] / max(s[0], 1e-300):.2e})")
    signs = np.sign(U[np.abs(U).argmax(axis=0), np.arange(N)])
    signs[signs == 0] = 1.0
    if reference_P is not None:
        first = U[:, 0] @ np.asarray(reference_P, dtype=float)
        lead = np.sign(first[np.abs(first).argmax()])
    else:
        lead = np.sign(U[:, 0].sum())
    if lead != 0:
        signs[0] = lead
    return TruncatedSvd(U * signs, s, V * signs, signs)


def _stack(X, ndim):
    X = np.asarray(X, dtype=float)
    if X.ndim == ndim:
        return X[None], True
    if X.ndim != ndim + 1:
        raise ShapeError(f"expected a {ndim}-D matrix or a stack of them")
    return X, False


def T_of_P(svd, P_tilde):
    """Column-normalized coefficient matrix ``T = U' P̃ D2^-1`` (first row ones)."""
    T = svd.U.T @ np.asarray(P_tilde, dtype=float)
    first = T[..., 0:1, :]
    if np.any(np.abs(first) <= FIRST_ROW_TOL):
        raise InfeasibleSolutionError("first-row coefficient vanishes; alpha undefined")
    return T / first


def T_of_E(svd, E_tilde):
    """Row coefficients ``R = Ẽ V S^-1`` with each row scaled to start with 1."""
    R = np.asarray(E_tilde, dtype=float) @ svd.V / svd.sigma
    first = R[..., :, 0:1]
    if np.any(np.abs(first) <= FIRST_ROW_TOL):
        raise InfeasibleSolutionError("first coefficient vanishes; alpha undefined")
    return R / first


def alpha_of_P(svd, P_tilde):
    """P-side coordinates: one point in R^(N-1) per column of P̃.

    ``P_tilde`` may be a single K x N matrix or a stack of shape (S, K, N).
    """
    P, _ = _stack(P_tilde, 2)
    if P.shape[1:] != (svd.U.shape[0], svd.rank):
        raise ShapeError(f"P has shape {P.shape[1:]}, expected {(svd.U.shape[0], svd.rank)}")
    T = T_of_P(svd, P)
    pts = np.swapaxes(T[:, 1:, :], 1, 2)
    return _cloud(pts, "P")


def alpha_of_E(svd, E_tilde):
    """E-side coordinates: one point in R^(N-1) per row of Ẽ."""
    E, _ = _stack(E_tilde, 2)
    if E.shape[1:] != (svd.rank, svd.V.shape[0]):
        raise ShapeError(f"E has shape {E.shape[1:]}, expected {(svd.rank, svd.V.shape[0])}")
    R = T_of_E(svd, E)
    return _cloud(R[:, :, 1:], "E")


def _cloud(pts, side):
    S, N, d = pts.shape
    return AlphaCloud(
        points=pts.reshape(S * N, d),
        components=np.tile(np.arange(N), S),
        sample_index=np.repeat(np.arange(S), N),
        side=side,
    )


def T_from_alpha(alpha):
    """Build T from an (N, N-1) array of per-component coordinates."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    N = alpha.shape[0]
    if alpha.shape != (N, N - 1):
        raise ShapeError(f"alpha must have shape (N, N-1), got {alpha.shape}")
    return np.vstack([np.ones(N), alpha.T])


def reconstruct_from_alpha(svd, T, check=True):
    """Factorization ``P̃ = U T D1^-1``, ``Ẽ = D1 T^-1 S V'`` with ``D1 = diag(e' U T)``.

    Raises :class:`InfeasibleSolutionError` if T is singular, a column of
    ``U T`` has nonpositive sum, or (with ``check``) P̃ or Ẽ has an entry below
    the clamp tolerance. With ``check=False`` the raw ``(P̃, Ẽ)`` arrays are
    returned instead of a :class:`Factorization`.
    """
    T = np.asarray(T, dtype=float)
    N = svd.rank
    if T.shape != (N, N):
        raise ShapeError(f"T must be {N} x {N}")
    if not np.allclose(T[0], 1.0, rtol=0, atol=1e-12):
        raise ValueError("first row of T must be all ones")
    if np.linalg.cond(T) > 1e12:
        raise InfeasibleSolutionError("T is singular")
    UT = svd.U @ T
    d1 = UT.sum(axis=0)
    if np.any(d1 <= 0):
        raise InfeasibleSolutionError(
            f"column {int(np.argmin(d1))} of U T has nonpositive sum; outside the feasible cone")
    P = UT / d1
    E = (d1[:, None] * np.linalg.solve(T, np.diag(svd.sigma))) @ svd.V.T
    if not check:
        return P, E
    e_tol = CLAMP_TOL * max(1.0, float(np.abs(E).max()))
    if P.min() < -CLAMP_TOL or E.min() < -e_tol:
        side, val = ("P", P.min()) if P.min() < -CLAMP_TOL else ("E", E.min())
        raise InfeasibleSolutionError(f"reconstructed {side} has negative entry {val:.3e}")
    return Factorization(P, E, normalized=True)


def cloud_bbox_area(cloud):
    """Sum over components of the axis-aligned bounding-box volume of the points."""
    total = 0.0
    for n in np.unique(cloud.components):
        pts = cloud.for_component(n)
        total += float(np.prod(pts.max(axis=0) - pts.min(axis=0)))
    return total
