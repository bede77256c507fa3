"""Experiment pipelines: synthetic data, Poisson bootstrap, initialization
study, SFS-size rank scans and bootstrap scatter in SVD coordinates."""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .fit import FitConfig, fit, init_rng, random_init
from .model import CountMatrix, Factorization, match_components, normalize_columns
from .sampler import SamplerConfig, run_sampler
from .svd import AlphaCloud, alpha_of_P, cloud_bbox_area, truncated_svd

THREADS_ENV = "NMFSFS_NUM_THREADS"

DEFAULT_BETAS = (0.1, 0.5, 1.0)


def default_jobs():
    """Worker count from ``NMFSFS_NUM_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def substream(seed, *key):
    """Independent generator for a task identified by ``key`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key)))


def subseed(seed, *key):
    return int(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
               .generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> 1)


def _map(fn, tasks, n_jobs):
    if n_jobs is None:
        n_jobs = default_jobs()
    if n_jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(fn, tasks))


# ---------------------------------------------------------------------------
# synthetic data

def separable_factors(K, G, N, rng, scale=100.0):
    """Ground truth with an anchor row per component in P and an anchor
    column per component in E, so the NMF of ``PE`` is unique."""
    P = rng.uniform(0.1, 1.0, size=(K, N))
    E = rng.uniform(0.1, 1.0, size=(N, G)) * scale
    rows = rng.choice(K, size=N, replace=False)
    cols = rng.choice(G, size=N, replace=False)
    for n in range(N):
        P[rows[n]] = 0.0
        P[rows[n], n] = 1.0
        E[:, cols[n]] = 0.0
        E[n, cols[n]] = scale
    return normalize_columns(Factorization(P, E))


def dense_factors(K, G, N, rng, scale=100.0):
    """Strictly positive ground truth; its SFS has nonzero size."""
    P = rng.uniform(0.1, 1.0, size=(K, N))
    E = rng.uniform(0.1, 1.0, size=(N, G)) * scale
    return normalize_columns(Factorization(P, E))


def poisson_counts(F, rng):
    return CountMatrix(rng.poisson(F.product()).astype(float))


def local_optima_instance(rng, K=24, G=20, N=5, scale=200.0):
    """Count data whose KL landscape has several basins.

    Sparse ground-truth signatures (each on a few mutation types, with
    overlaps) and sparse exposures make random multiplicative-update starts
    settle in distinct local minima a sizeable fraction of the time.
    """
    P = np.zeros((K, N))
    width = max(2, K // N + 2)
    for n in range(N):
        start = (n * K) // N
        idx = np.arange(start, start + width) % K
        P[idx, n] = rng.uniform(0.2, 1.0, size=width)
    E = rng.uniform(0.0, 1.0, size=(N, G)) * (rng.uniform(size=(N, G)) < 0.5) * scale
    E[:, E.sum(axis=0) == 0] = scale / N
    F = normalize_columns(Factorization(P, E))
    return poisson_counts(F, rng), F


# ---------------------------------------------------------------------------
# bootstrap

def poisson_bootstrap(F_hat, B=100, seed=0):
    """``B`` count matrices with entries ``~ Poisson((P̂Ê)_kg)``.

    Replicate b uses its own substream, so any replicate can be regenerated
    alone. Variates come from numpy's Generator.poisson.
    """
    mean = np.asarray(F_hat.P) @ np.asarray(F_hat.E)
    if mean.min() < 0:
        raise ValueError("Poisson means must be nonnegative")
    return [CountMatrix(substream(seed, b).poisson(mean).astype(float)) for b in range(B)]


@dataclass
class InitStudyResult:
    """``min_divergence[r, c]`` is the lowest GKL among the first
    ``inits[c]`` starts of run r."""

    inits: np.ndarray
    min_divergence: np.ndarray
    run_seeds: np.ndarray

    @property
    def mean(self):
        return self.min_divergence.mean(axis=0)

    def quantiles(self, q=(0.05, 0.95)):
        return np.quantile(self.min_divergence, q, axis=0)

    def rows(self):
        q05, q95 = self.quantiles()
        return [
            {"inits": int(k), "mean": float(m), "q05": float(a), "q95": float(b)}
            for k, m, a, b in zip(self.inits, self.mean, q05, q95)
        ]


def _init_study_run(args):
    M, N, k_max, seed, max_iter, rel_tol = args
    res = fit(M, FitConfig(rank=N, n_inits=k_max, max_iter=max_iter, rel_tol=rel_tol, seed=seed))
    return np.minimum.accumulate(res.per_init_divergences)


def init_study(M, N, runs=100, inits_grid=tuple(range(1, 11)), seed=0,
               max_iter=10000, rel_tol=1e-8, n_jobs=None):
    """Minimum GKL reached as a function of the number of random starts.

    Each run draws ``max(inits_grid)`` starts from its own seed; the k-start
    value is the running minimum over the first k of them, which equals a
    separate k-start fit with that seed.
    """
    M = np.asarray(M, dtype=float)
    grid = np.array(sorted(set(int(k) for k in inits_grid)))
    if grid[0] < 1:
        raise ValueError("numbers of initializations must be >= 1")
    seeds = np.array([subseed(seed, r) for r in range(runs)])
    tasks = [(M, N, int(grid[-1]), int(s), max_iter, rel_tol) for s in seeds]
    curves = np.array(_map(_init_study_run, tasks, n_jobs))
    return InitStudyResult(grid, curves[:, grid - 1], seeds)


# ---------------------------------------------------------------------------
# rank scan

RANK_SCAN_COLUMNS = ("N", "beta", "repeat", "seed", "avg_size_P", "avg_size_E",
                     "iterations", "wall_time")
SUMMARY_COLUMNS = ("N", "beta", "repeats", "size_mean", "size_q25", "size_q75",
                   "iter_mean", "iter_q05", "iter_q95", "time_mean", "time_q05", "time_q95")


@dataclass
class RankScanResult:
    rows: list
    fits: dict = field(default_factory=dict, repr=False)

    def column(self, name, N=None, beta=None):
        return np.array([r[name] for r in self.rows
                         if (N is None or r["N"] == N) and (beta is None or r["beta"] == beta)])

    def summary(self):
        out = []
        keys = sorted({(r["N"], r["beta"]) for r in self.rows})
        for N, beta in keys:
            size = self.column("avg_size_P", N, beta)
            its = self.column("iterations", N, beta)
            tm = self.column("wall_time", N, beta)
            s25, s75 = np.quantile(size, [0.25, 0.75])
            i05, i95 = np.quantile(its, [0.05, 0.95])
            t05, t95 = np.quantile(tm, [0.05, 0.95])
            out.append({
                "N": N, "beta": beta, "repeats": len(size),
                "size_mean": float(size.mean()), "size_q25": float(s25), "size_q75": float(s75),
                "iter_mean": float(its.mean()), "iter_q05": float(i05), "iter_q95": float(i95),
                "time_mean": float(tm.mean()), "time_q05": float(t05), "time_q95": float(t95),
            })
        return out


def _rank_scan_task(args):
    F, N, beta, rep, seed, base = args
    cfg = replace(base, beta=beta, seed=seed)
    t0 = time.perf_counter()
    chain, env = run_sampler(F, cfg)
    dt = time.perf_counter() - t0
    return {"N": N, "beta": beta, "repeat": rep, "seed": seed,
            "avg_size_P": env.avg_size_P, "avg_size_E": env.avg_size_E,
            "iterations": chain.iterations, "wall_time": dt}


def rank_scan(M, N_range, beta_set=DEFAULT_BETAS, repeats=50, seed=0,
              fit_config=None, sampler_config=None, factorizations=None, n_jobs=None):
    """SFS size for each rank, beta and repeat.

    Each rank is fitted once (multi-start) and the sampler is then run
    ``repeats`` times per beta from that fit. ``factorizations`` maps rank to
    a ready-made starting solution and skips the fit for that rank.
    """
    M = np.asarray(M, dtype=float)
    fit_config = fit_config or {}
    base = sampler_config or SamplerConfig()
    factorizations = dict(factorizations or {})
    tasks = []
    for N in N_range:
        N = int(N)
        if N not in factorizations:
            cfg = FitConfig(rank=N, seed=subseed(seed, 0, N), **fit_config)
            factorizations[N] = fit(M, cfg).best
        F = normalize_columns(factorizations[N])
        factorizations[N] = F
        for bi, beta in enumerate(beta_set):
            for rep in range(repeats):
                tasks.append((F, N, float(beta), rep, subseed(seed, 1, N, bi, rep), base))
    rows = _map(_rank_scan_task, tasks, n_jobs)
    return RankScanResult(rows, factorizations)


# ---------------------------------------------------------------------------
# bootstrap study

@dataclass
class BootstrapResult:
    reference: Factorization
    svd: object
    fits: list
    divergences: np.ndarray
    alphas: np.ndarray
    seeds: np.ndarray
    init_mode: str

    @property
    def B(self):
        return len(self.fits)

    def cloud(self):
        B, N, d = self.alphas.shape
        return AlphaCloud(self.alphas.reshape(B * N, d), np.tile(np.arange(N), B),
                          np.repeat(np.arange(B), N), "P")

    def bbox_area(self):
        return cloud_bbox_area(self.cloud())

    def rows(self):
        out = []
        for b in range(self.B):
            for n in range(self.alphas.shape[1]):
                row = {"replicate": b, "seed": int(self.seeds[b]), "init_mode": self.init_mode,
                       "divergence": float(self.divergences[b]), "component": n}
                for a, v in enumerate(self.alphas[b, n]):
                    row[f"alpha_{a + 1}"] = float(v)
                out.append(row)
        return out


def _bootstrap_task(args):
    Mb, N, n_inits, max_iter, rel_tol, fit_seed, inits, P_ref = args
    cfg = FitConfig(rank=N, n_inits=n_inits, max_iter=max_iter, rel_tol=rel_tol, seed=fit_seed)
    res = fit(Mb, cfg, inits=inits)
    perm = match_components(P_ref, res.best.P)
    F = Factorization(res.best.P[:, perm], res.best.E[perm], normalized=True)
    return F, res.divergence


def bootstrap_study(M, N, B=100, init_mode="random", n_inits=10, seed=0,
                    max_iter=10000, rel_tol=1e-8, replicates=None, reference=None, n_jobs=None):
    """Refit Poisson bootstrap replicates and place them in SVD coordinates.

    ``init_mode`` is ``"random"`` (fresh starts for each replicate) or
    ``"same"`` (one shared set of ``n_inits`` starts). Replicate P's are
    matched to the reference fit and projected against the SVD of its
    product. ``replicates`` replaces the Poisson draws (noise-free controls).
    """
    if init_mode not in ("random", "same"):
        raise ValueError("init_mode must be 'random' or 'same'")
    M = np.asarray(M, dtype=float)
    if reference is None:
        reference = fit(M, FitConfig(rank=N, n_inits=n_inits, max_iter=max_iter,
                                     rel_tol=rel_tol, seed=subseed(seed, 0))).best
    reference = normalize_columns(reference)
    svd = truncated_svd(reference.product(), N, reference_P=reference.P)
    if replicates is None:
        replicates = poisson_bootstrap(reference, B, subseed(seed, 1))
    replicates = [np.asarray(r, dtype=float) for r in replicates]

    shared = None
    if init_mode == "same":
        s = subseed(seed, 2)
        shared = [random_init(M.shape, N, init_rng(s, r)) for r in range(n_inits)]
        seeds = np.full(len(replicates), s)
    else:
        seeds = np.array([subseed(seed, 3, b) for b in range(len(replicates))])

    tasks = [(Mb, N, n_inits, max_iter, rel_tol, int(seeds[b]), shared, reference.P)
             for b, Mb in enumerate(replicates)]
    out = _map(_bootstrap_task, tasks, n_jobs)
    fits = [f for f, _ in out]
    divs = np.array([d for _, d in out])
    alphas = np.array([alpha_of_P(svd, F.P).points for F in fits])
    return BootstrapResult(reference, svd, fits, divs, alphas, seeds, init_mode)
