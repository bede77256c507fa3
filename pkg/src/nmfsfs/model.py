"""Core data model: count matrices, factorizations, the GKL objective,
column normalization and component matching."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

# Entries in [-CLAMP_TOL, 0) are treated as roundoff and set to zero.
CLAMP_TOL = 1e-12

# Exhaustive permutation search up to this rank, Hungarian algorithm above.
_ENUMERATE_MAX_RANK = 8


class ShapeError(ValueError):
    """Array dimensions do not agree."""


class NegativeEntryError(ValueError):
    """A matrix that must be nonnegative has an entry below the clamp tolerance."""


class InfiniteDivergenceError(ArithmeticError):
    """M has a positive count where the reconstruction is exactly zero."""


class DegenerateComponentError(ValueError):
    """A component is identically zero or a component pair is degenerate."""


def clamp_nonnegative(X, tol=CLAMP_TOL, name="matrix", scale=1.0):
    """Return a copy of ``X`` with roundoff negatives set to zero.

    Entries below ``-tol * max(scale, 1)`` raise :class:`NegativeEntryError`.
    """
    X = np.array(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite entries")
    if X.size:
        lo = X.min()
        limit = tol * max(float(scale), 1.0)
        if lo < -limit:
            idx = np.unravel_index(np.argmin(X), X.shape)
            raise NegativeEntryError(
                f"{name} has entry {lo:.3e} at {tuple(int(i) for i in idx)}, "
                f"below the clamp tolerance {-limit:.1e}")
        X[X < 0] = 0.0
    return X


def _frozen(X):
    X = np.array(X, dtype=float)
    X.setflags(write=False)
    return X


@dataclass(frozen=True)
class CountMatrix:
    """A K x G nonnegative data matrix with row and column labels.

    Labels default to ``"r0".."r{K-1}"`` and ``"c0".."c{G-1}"``.
    """

    values: np.ndarray
    row_labels: tuple = None
    col_labels: tuple = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ShapeError(f"count matrix must be 2-D and non-empty, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("count matrix contains non-finite entries")
        if values.min() < 0:
            raise NegativeEntryError("count matrix has negative entries")
        K, G = values.shape
        rows = self.row_labels
        cols = self.col_labels
        rows = tuple(f"r{k}" for k in range(K)) if rows is None else tuple(str(r) for r in rows)
        cols = tuple(f"c{g}" for g in range(G)) if cols is None else tuple(str(c) for c in cols)
        if len(rows) != K or len(cols) != G:
            raise ShapeError(
                f"label counts ({len(rows)}, {len(cols)}) do not match shape {values.shape}")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "row_labels", rows)
        object.__setattr__(self, "col_labels", cols)

    @property
    def shape(self):
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class Factorization:
    """Nonnegative pair ``(P, E)`` with ``P`` of shape K x N and ``E`` of shape N x G.

    Entries in ``[-1e-12, 0)`` (scaled by the largest entry of E for E) are
    clamped to zero on construction; anything more negative is an error.
    """

    P: np.ndarray
    E: np.ndarray
    normalized: bool = field(default=False, compare=False)

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        E = np.asarray(self.E, dtype=float)
        if P.ndim != 2 or E.ndim != 2:
            raise ShapeError("P and E must be 2-D")
        if P.shape[1] != E.shape[0]:
            raise ShapeError(f"inner dimensions differ: P is {P.shape}, E is {E.shape}")
        K, N = P.shape
        G = E.shape[1]
        if N < 1 or N > min(K, G):
            raise ShapeError(f"rank {N} must satisfy 1 <= N <= min(K, G) = {min(K, G)}")
        P = clamp_nonnegative(P, name="P")
        E = clamp_nonnegative(E, name="E", scale=np.abs(E).max(initial=0.0))
        object.__setattr__(self, "P", _frozen(P))
        object.__setattr__(self, "E", _frozen(E))

    @property
    def rank(self):
        return self.P.shape[1]

    @property
    def shape(self):
        """(K, N, G)"""
        return self.P.shape[0], self.P.shape[1], self.E.shape[1]

    def product(self):
        return self.P @ self.E


def gkl_divergence(M, R):
    """Generalised Kullback-Leibler divergence D(M | R).

    Sums ``M log(M / R) - M + R`` over all entries with ``0 log 0 = 0``.

    Raises
    ------
    ShapeError
        If the shapes differ.
    InfiniteDivergenceError
        If some ``M_kg > 0`` has ``R_kg == 0``.
    """
    M = np.asarray(M, dtype=float)
    R = np.asarray(R, dtype=float)
    if M.shape != R.shape:
        raise ShapeError(f"shape mismatch: {M.shape} vs {R.shape}")
    if R.size and R.min() < 0:
        raise NegativeEntryError("reconstruction has negative entries")
    pos = M > 0
    if np.any(pos & (R <= 0)):
        k, g = np.argwhere(pos & (R <= 0))[0]
        raise InfiniteDivergenceError(
            f"M[{k},{g}] = {M[k, g]} > 0 but the reconstruction is 0")
    m = M[pos]
    d = np.sum(m * np.log(m / R[pos])) - M.sum() + R.sum()
    # the terms are individually >= 0; negative totals are cancellation error
    return max(float(d), 0.0)


def normalize_columns(F):
    """Rescale so every column of P sums to one; E absorbs the scale row-wise."""
    P = np.asarray(F.P, dtype=float)
    E = np.asarray(F.E, dtype=float)
    sums = P.sum(axis=0)
    zero = np.flatnonzero(sums <= 0)
    if zero.size:
        raise DegenerateComponentError(f"column {int(zero[0])} of P has zero sum")
    return Factorization(P / sums, E * sums[:, None], normalized=True)


def is_column_normalized(P, tol=1e-9):
    return bool(np.all(np.abs(np.asarray(P).sum(axis=0) - 1.0) <= tol))


def cosine_matrix(A, B):
    """Pairwise cosine similarity between the columns of A and the columns of B."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    na = np.linalg.norm(A, axis=0)
    nb = np.linalg.norm(B, axis=0)
    for name, norms in (("P_ref", na), ("P_other", nb)):
        bad = np.flatnonzero(norms == 0)
        if bad.size:
            raise DegenerateComponentError(
                f"column {int(bad[0])} of {name} is zero; cosine is undefined")
    return (A / na).T @ (B / nb)


def match_components(P_ref, P_other):
    """Find the column permutation of ``P_other`` best matching ``P_ref``.

    Returns an integer array ``perm`` such that ``P_other[:, perm]`` is aligned
    with ``P_ref``, maximizing the summed cosine similarity of matched
    columns. The search is exact; ties go to the lexicographically smallest
    permutation.
    """
    P_ref = np.asarray(P_ref, dtype=float)
    P_other = np.asarray(P_other, dtype=float)
    if P_ref.shape != P_other.shape:
        raise ShapeError(f"shape mismatch: {P_ref.shape} vs {P_other.shape}")
    C = cosine_matrix(P_ref, P_other)
    N = C.shape[0]
    if N <= _ENUMERATE_MAX_RANK:
        rows = np.arange(N)
        best, best_score = None, -np.inf
        # permutations() yields in lexicographic order; strict '>' keeps the first maximum
        for perm in itertools.permutations(range(N)):
            score = C[rows, perm].sum()
            if score > best_score:
                best, best_score = perm, score
        return np.array(best, dtype=int)
    _, cols = linear_sum_assignment(C, maximize=True)
    return np.asarray(cols, dtype=int)


def permute_factorization(F, perm):
    """Reorder components: columns of P and rows of E."""
    perm = np.asarray(perm, dtype=int)
    return Factorization(F.P[:, perm], F.E[perm, :], normalized=F.normalized)
