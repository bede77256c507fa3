"""Poisson NMF by Lee-Seung multiplicative updates with multi-start initialization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .model import (
    Factorization,
    InfiniteDivergenceError,
    ShapeError,
    gkl_divergence,
    normalize_columns,
)

# Floor for PE in the ratio M / PE; only reached where M is also zero.
PE_FLOOR = 1e-100

INIT_LOW, INIT_HIGH = 0.1, 1.9


@dataclass(frozen=True)
class FitConfig:
    rank: int
    n_inits: int = 5
    max_iter: int = 10000
    rel_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.n_inits < 1:
            raise ValueError("n_inits must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be > 0")


@dataclass
class FitResult:
    best: Factorization
    divergence: float
    per_init_divergences: np.ndarray
    iterations_used: np.ndarray
    best_index: int = 0
    traces: list = field(default=None, repr=False)


def init_rng(seed, index):
    """Generator for initialization ``index`` of a run seeded with ``seed``.

    Streams are keyed by (seed, index) so that init k is the same whether it
    runs alone, as part of a longer run, or on another worker.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),)))


def random_init(shape_KG, rank, rng):
    """Strictly positive starting point, P column-normalized."""
    K, G = shape_KG
    P = rng.uniform(INIT_LOW, INIT_HIGH, size=(K, rank))
    E = rng.uniform(INIT_LOW, INIT_HIGH, size=(rank, G))
    s = P.sum(axis=0)
    return P / s, E * s[:, None]


def _ratio(M, PE):
    bad = (M > 0) & (PE <= 0)
    if np.any(bad):
        k, g = np.argwhere(bad)[0]
        raise InfiniteDivergenceError(
            f"reconstruction is zero at ({k}, {g}) where M = {M[k, g]}")
    return M / np.maximum(PE, PE_FLOOR)


def _step(M, P, E):
    # E <- E * (P^T (M / PE)) / (P^T 1)
    E = E * (P.T @ _ratio(M, P @ E)) / P.sum(axis=0)[:, None]
    # P <- P * ((M / PE) E^T) / (1 E^T)
    P = P * (_ratio(M, P @ E) @ E.T) / E.sum(axis=1)[None, :]
    return P, E


def lee_seung_step(M, F):
    """One KL multiplicative update: E first, then P.

    Returns an unnormalized :class:`Factorization`.
    """
    M = np.asarray(M, dtype=float)
    P = np.asarray(F.P, dtype=float)
    E = np.asarray(F.E, dtype=float)
    if M.shape != (P.shape[0], E.shape[1]):
        raise ShapeError(f"M has shape {M.shape}, PE has shape {(P.shape[0], E.shape[1])}")
    P, E = _step(M, P, E)
    return Factorization(P, E)


@numba.njit(cache=True)
def _product(P, E, PE):
    K, N = P.shape
    G = E.shape[1]
    for k in range(K):
        for g in range(G):
            PE[k, g] = 0.0
        for n in range(N):
            p = P[k, n]
            for g in range(G):
                PE[k, g] += p * E[n, g]


@numba.njit(cache=True)
def _ratio_into(M, PE, Q, info):
    K, G = M.shape
    for k in range(K):
        for g in range(G):
            m = M[k, g]
            v = PE[k, g]
            if m > 0 and v <= 0:
                info[0] = 1
                info[2] = k
                info[3] = g
                return False
            Q[k, g] = m / max(v, 1e-100)
    return True


@numba.njit(cache=True)
def _iterate(M, P, E, max_iter, rel_tol, hist, info):
    """Compiled update loop; same arithmetic as ``_step`` plus the GKL.

    ``info`` receives [status, iterations, k, g]; status 1 flags a zero
    reconstruction under a positive count.
    """
    K, N = P.shape
    G = E.shape[1]
    PE = np.empty((K, G))
    Q = np.empty((K, G))
    num_E = np.empty((N, G))
    num_P = np.empty((K, N))
    mlogm = 0.0
    msum = 0.0
    for k in range(K):
        for g in range(G):
            m = M[k, g]
            msum += m
            if m > 0:
                mlogm += m * np.log(m)

    _product(P, E, PE)
    it = 0
    d = 0.0
    while True:
        # GKL of the current PE
        s = 0.0
        r = 0.0
        for k in range(K):
            for g in range(G):
                v = PE[k, g]
                r += v
                if M[k, g] > 0:
                    s += M[k, g] * np.log(v)
        d_new = mlogm - s - msum + r
        if d_new < 0.0:
            d_new = 0.0
        if it < hist.shape[0]:
            hist[it] = d_new
        if it > 0:
            change = abs(d - d_new)
            d = d_new
            if rel_tol > 0 and (d == 0.0 or change < rel_tol * d):
                break
        else:
            d = d_new
        if it >= max_iter:
            break

        if not _ratio_into(M, PE, Q, info):
            break
        num_E[:, :] = 0.0
        for k in range(K):
            for n in range(N):
                p = P[k, n]
                for g in range(G):
                    num_E[n, g] += p * Q[k, g]
        for n in range(N):
            den = 0.0
            for k in range(K):
                den += P[k, n]
            for g in range(G):
                E[n, g] = E[n, g] * num_E[n, g] / den

        _product(P, E, PE)
        if not _ratio_into(M, PE, Q, info):
            break
        for k in range(K):
            for n in range(N):
                acc = 0.0
                for g in range(G):
                    acc += Q[k, g] * E[n, g]
                num_P[k, n] = acc
        for n in range(N):
            den = 0.0
            for g in range(G):
                den += E[n, g]
            for k in range(K):
                P[k, n] = P[k, n] * num_P[k, n] / den
        _product(P, E, PE)
        it += 1
    info[1] = it
    return d


def run_updates(M, P, E, max_iter, rel_tol=None, trace=False):
    """Iterate multiplicative updates from (P, E).

    Stops when the relative GKL change drops below ``rel_tol`` (never, if
    ``rel_tol`` is None) or after ``max_iter`` steps.

    Returns ``(P, E, divergence, iterations, trace)`` where ``trace`` holds the
    GKL before the first step and after every step (None unless requested).
    """
    M = np.ascontiguousarray(M, dtype=float)
    P = np.array(P, dtype=float)
    E = np.array(E, dtype=float)
    if M.shape != (P.shape[0], E.shape[1]):
        raise ShapeError(f"M has shape {M.shape}, PE has shape {(P.shape[0], E.shape[1])}")
    gkl_divergence(M, P @ E)  # validates the starting point
    hist = np.empty(max_iter + 1 if trace else 1)
    info = np.zeros(4, dtype=np.int64)
    d = _iterate(M, P, E, int(max_iter), float(rel_tol or 0.0), hist, info)
    if info[0]:
        k, g = int(info[2]), int(info[3])
        raise InfiniteDivergenceError(
            f"reconstruction is zero at ({k}, {g}) where M = {M[k, g]}")
    it = int(info[1])
    return P, E, max(float(d), 0.0), it, (hist[:it + 1].copy() if trace else None)


def fit(M, cfg, inits=None, trace=False):
    """Fit ``M ~ PE`` from ``cfg.n_inits`` random starts and keep the best.

    Parameters
    ----------
    M : array_like or CountMatrix
        K x G nonnegative data.
    cfg : FitConfig
    inits : sequence of (P, E), optional
        Explicit starting points; overrides the random ones (and ``n_inits``).
    trace : bool
        Keep the per-iteration GKL trace of every start.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ShapeError("M must be 2-D")
    K, G = M.shape
    if cfg.rank > min(K, G):
        raise ShapeError(f"rank {cfg.rank} exceeds min(K, G) = {min(K, G)}")
    if inits is None:
        inits = [random_init((K, G), cfg.rank, init_rng(cfg.seed, r)) for r in range(cfg.n_inits)]

    best = None
    divs, iters, traces = [], [], []
    for idx, (P0, E0) in enumerate(inits):
        P, E, d, it, tr = run_updates(M, P0, E0, cfg.max_iter, cfg.rel_tol, trace=trace)
        divs.append(d)
        iters.append(it)
        traces.append(tr)
        # strict '<': the lowest index wins ties
        if best is None or d < best[0]:
            best = (d, idx, P, E)
    d, idx, P, E = best
    F = normalize_columns(Factorization(P, E))
    return FitResult(
        best=F,
        divergence=d,
        per_init_divergences=np.array(divs),
        iterations_used=np.array(iters),
        best_index=idx,
        traces=traces if trace else None,
    )
