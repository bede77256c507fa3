"""Sampling the set of feasible solutions (SFS) of an NMF by random affine mixing.

Each sweep visits every component i, picks a partner j != i uniformly,
computes the interval of mixing coefficients lambda that keep both
``P A_ij(lambda)`` and ``A_ij(lambda)^-1 E`` nonnegative, draws lambda from a
shifted symmetric beta law on that interval and applies the transform. The
product PE never changes. A running per-entry min/max over everything the
chain reaches gives the SFS envelope, and its mean width is the SFS size.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .model import (
    CLAMP_TOL,
    DegenerateComponentError,
    Factorization,
    NegativeEntryError,
    ShapeError,
    is_column_normalized,
    normalize_columns,
)

LO_CAP = -1e6
HI_CAP = 1.0 - 1e-9


class DegeneracyWarning(UserWarning):
    """Unbounded lower interval end (identical columns) or an unused component."""


@dataclass(frozen=True)
class TransformSpec:
    rank: int
    i: int
    j: int
    lam: float

    def __post_init__(self):
        if not (0 <= self.i < self.rank and 0 <= self.j < self.rank):
            raise ValueError(f"indices ({self.i}, {self.j}) out of range for rank {self.rank}")
        if self.i == self.j:
            raise ValueError("i and j must differ")
        if self.lam == 1.0:
            raise ValueError("lambda = 1 gives a singular transform")


@dataclass(frozen=True)
class FeasibleInterval:
    lo: float
    hi: float
    lo_unbounded: bool = False
    hi_clamped: bool = False

    def __post_init__(self):
        if not (self.lo <= 0.0 <= self.hi < 1.0):
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")

    @property
    def width(self):
        return self.hi - self.lo


@dataclass(frozen=True)
class SamplerConfig:
    """Sampler settings.

    ``segment_envelope`` also folds the endpoints of every computed interval
    into the envelope. Each endpoint is itself a feasible solution and the
    entries are monotone in lambda, so this covers the whole segment the
    step could have landed on. Set it to False to track visited states only.
    """

    beta: float = 0.5
    check_every: int = 1000
    epsilon: float = 1e-10
    seed: int = 0
    max_iterations: int = 10**7
    track_E_size: bool = False
    thin: int = None
    segment_envelope: bool = True
    max_kept: int = 100_000

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        if self.check_every < 1:
            raise ValueError("check_every must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.thin is not None and self.thin < 1:
            raise ValueError("thin must be >= 1")


@dataclass
class SfsEnvelope:
    P_min: np.ndarray
    P_max: np.ndarray
    E_min: np.ndarray
    E_max: np.ndarray
    avg_size_P: float
    avg_size_E: float

    def merge(self, other):
        """Elementwise union of two envelopes of the same reference solution."""
        P_min = np.minimum(self.P_min, other.P_min)
        P_max = np.maximum(self.P_max, other.P_max)
        E_min = np.minimum(self.E_min, other.E_min)
        E_max = np.maximum(self.E_max, other.E_max)
        return SfsEnvelope(P_min, P_max, E_min, E_max,
                           sfs_size(P_min, P_max), sfs_size(E_min, E_max))

    def contains(self, F, tol=0.0):
        return bool(np.all(F.P >= self.P_min - tol) and np.all(F.P <= self.P_max + tol)
                    and np.all(F.E >= self.E_min - tol) and np.all(F.E <= self.E_max + tol))


@dataclass
class SfsChain:
    """Retained samples. ``iterations`` is the number of sweeps run;
    ``sample_iterations`` gives the sweep index of each retained sample."""

    samples_P: np.ndarray
    samples_E: np.ndarray
    sample_iterations: np.ndarray
    thinning: int
    iterations: int
    converged: bool
    size_history: np.ndarray = field(repr=False)
    lo_unbounded_count: int = 0
    hi_clamped_count: int = 0

    def __len__(self):
        return len(self.samples_P)


def build_transform(spec):
    """Mixing matrix ``A_ij(lambda)`` and its inverse ``A_ij(-lambda / (1 - lambda))``.

    ``P @ A`` replaces column i of P by ``(1 - lambda) P_i + lambda P_j``.
    """
    def a(lam):
        A = np.eye(spec.rank)
        A[spec.i, spec.i] = 1.0 - lam
        A[spec.j, spec.i] = lam
        return A

    return a(spec.lam), a(-spec.lam / (1.0 - spec.lam))


def feasible_interval(F, i, j):
    """Range of lambda keeping ``P A_ij(lambda)`` and its E counterpart nonnegative.

    The lower end comes from the rows where ``P_kj > P_ki`` and the upper end
    from the columns where ``E_ig + E_jg > 0``. An empty lower set means the
    two columns coincide; the lower end is then capped at -1e6. An upper end
    at 1 (row i of E is zero) is pulled back to ``1 - 1e-9``.
    """
    P = np.asarray(F.P, dtype=float)
    E = np.asarray(F.E, dtype=float)
    N = P.shape[1]
    if not (0 <= i < N and 0 <= j < N) or i == j:
        raise ValueError(f"need distinct component indices in [0, {N}), got ({i}, {j})")
    pi, pj = P[:, i], P[:, j]
    down = pj > pi
    s = E[i] + E[j]
    up = s > 0
    if not down.any() and not up.any():
        raise DegenerateComponentError(
            f"components {i} and {j}: identical P columns and zero E rows")
    lo_unbounded = hi_clamped = False
    if down.any():
        lo = float(np.max(pi[down] / (pi[down] - pj[down])))
    else:
        lo, lo_unbounded = LO_CAP, True
        warnings.warn(f"columns {i} and {j} of P coincide; lower lambda bound capped at {LO_CAP:g}",
                      DegeneracyWarning, stacklevel=2)
    hi = float(np.min(E[j][up] / s[up])) if up.any() else 1.0
    if hi > HI_CAP:
        hi, hi_clamped = HI_CAP, True
        warnings.warn(f"row {i} of E is zero (unused component); upper lambda bound clamped",
                      DegeneracyWarning, stacklevel=2)
    return FeasibleInterval(min(lo, 0.0), max(hi, 0.0), lo_unbounded, hi_clamped)


def sample_lambda(interval, beta, rng):
    """Draw ``x ~ Beta(beta, beta)`` and return ``x * hi + (1 - x) * lo``."""
    if not beta > 0:
        raise ValueError("beta must be > 0")
    x = rng.beta(beta, beta)
    lam = x * interval.hi + (1.0 - x) * interval.lo
    return min(max(lam, interval.lo), interval.hi)


def sfs_size(min_grid, max_grid):
    """Mean per-entry width ``mean(max - min)`` of an envelope."""
    lo = np.asarray(min_grid, dtype=float)
    hi = np.asarray(max_grid, dtype=float)
    if lo.shape != hi.shape:
        raise ShapeError(f"shape mismatch: {lo.shape} vs {hi.shape}")
    if lo.size == 0:
        return 0.0
    return float(np.mean(hi - lo))


# ---------------------------------------------------------------------------
# compiled kernel

_OK, _DEGENERATE, _NEG_P, _NEG_E = 0, 1, 2, 3


@numba.njit(cache=True)
def _sweeps(P, E, js, xs, keep, out_P, out_E, Pmin, Pmax, Emin, Emax,
            segment, e_tol, info):
    """Run ``len(js)`` sweeps in place.

    ``info`` receives [status, i, j, sweep, lo_unbounded_count, hi_clamped_count].
    """
    K, N = P.shape
    G = E.shape[1]
    n_out = 0
    for s in range(js.shape[0]):
        for i in range(N):
            j = js[s, i]
            if j >= i:
                j += 1
            # lower end: rows where column j exceeds column i
            lo = -np.inf
            for k in range(K):
                if P[k, j] > P[k, i]:
                    r = P[k, i] / (P[k, i] - P[k, j])
                    if r > lo:
                        lo = r
            # upper end: columns with positive E_i + E_j
            hi = np.inf
            for g in range(G):
                t = E[i, g] + E[j, g]
                if t > 0.0:
                    r = E[j, g] / t
                    if r < hi:
                        hi = r
            if lo == -np.inf:
                if hi == np.inf:
                    info[0] = _DEGENERATE
                    info[1] = i
                    info[2] = j
                    info[3] = s
                    return n_out
                lo = LO_CAP
                info[4] += 1
            if hi > HI_CAP:
                hi = HI_CAP
                info[5] += 1
            if lo > 0.0:
                lo = 0.0
            if hi < 0.0:
                hi = 0.0

            if segment:
                for e in range(2):
                    lam = lo if e == 0 else hi
                    for k in range(K):
                        v = P[k, i] + lam * (P[k, j] - P[k, i])
                        if v < 0.0:
                            v = 0.0
                        if v < Pmin[k, i]:
                            Pmin[k, i] = v
                        if v > Pmax[k, i]:
                            Pmax[k, i] = v
                    c = 1.0 / (1.0 - lam)
                    mu = -lam * c
                    for g in range(G):
                        vi = E[i, g] * c
                        vj = E[j, g] + mu * E[i, g]
                        if vj < 0.0:
                            vj = 0.0
                        if vi < Emin[i, g]:
                            Emin[i, g] = vi
                        if vi > Emax[i, g]:
                            Emax[i, g] = vi
                        if vj < Emin[j, g]:
                            Emin[j, g] = vj
                        if vj > Emax[j, g]:
                            Emax[j, g] = vj

            x = xs[s, i]
            lam = x * hi + (1.0 - x) * lo
            if lam < lo:
                lam = lo
            if lam > hi:
                lam = hi
            for k in range(K):
                v = (1.0 - lam) * P[k, i] + lam * P[k, j]
                if v < 0.0:
                    if v < -1e-12:
                        info[0] = _NEG_P
                        info[1] = i
                        info[2] = j
                        info[3] = s
                        return n_out
                    v = 0.0
                P[k, i] = v
            c = 1.0 / (1.0 - lam)
            mu = -lam * c
            for g in range(G):
                ei = E[i, g]
                vj = E[j, g] + mu * ei
                if vj < 0.0:
                    if vj < -e_tol:
                        info[0] = _NEG_E
                        info[1] = i
                        info[2] = j
                        info[3] = s
                        return n_out
                    vj = 0.0
                E[j, g] = vj
                E[i, g] = ei * c

        # column sums are 1 in exact arithmetic; remove the drift
        for n in range(N):
            t = 0.0
            for k in range(K):
                t += P[k, n]
            for k in range(K):
                P[k, n] /= t
            for g in range(G):
                E[n, g] *= t

        for k in range(K):
            for n in range(N):
                v = P[k, n]
                if v < Pmin[k, n]:
                    Pmin[k, n] = v
                if v > Pmax[k, n]:
                    Pmax[k, n] = v
        for n in range(N):
            for g in range(G):
                v = E[n, g]
                if v < Emin[n, g]:
                    Emin[n, g] = v
                if v > Emax[n, g]:
                    Emax[n, g] = v

        if keep[s]:
            out_P[n_out] = P
            out_E[n_out] = E
            n_out += 1
    return n_out


def _prepare(F0):
    if not isinstance(F0, Factorization):
        F0 = Factorization(*F0)
    if not is_column_normalized(F0.P):
        raise ValueError("F0 must be column-normalized; call normalize_columns first")
    return F0


def _warn_degenerate_start(F0):
    # the first mixing step can hide these, so report them on the start itself
    P, E = np.asarray(F0.P), np.asarray(F0.E)
    for n in np.flatnonzero(~E.any(axis=1)):
        warnings.warn(f"row {n} of E is zero in the starting solution (unused component)",
                      DegeneracyWarning, stacklevel=3)
    N = P.shape[1]
    for i in range(N):
        for j in range(i + 1, N):
            if np.array_equal(P[:, i], P[:, j]):
                warnings.warn(f"columns {i} and {j} of P coincide in the starting solution",
                              DegeneracyWarning, stacklevel=3)


def run_sampler(F0, cfg=None):
    """Explore the SFS of ``F0``.

    Stops when the mean envelope width of P grew by less than ``cfg.epsilon``
    over the last ``cfg.check_every`` sweeps (and likewise for E when
    ``cfg.track_E_size``), or after ``cfg.max_iterations`` sweeps.

    Returns
    -------
    (SfsChain, SfsEnvelope)
    """
    cfg = cfg or SamplerConfig()
    F0 = _prepare(F0)
    _warn_degenerate_start(F0)
    P = np.array(F0.P, dtype=float)
    E = np.array(F0.E, dtype=float)
    K, N = P.shape
    G = E.shape[1]
    Pmin, Pmax = P.copy(), P.copy()
    Emin, Emax = E.copy(), E.copy()
    e_tol = CLAMP_TOL * max(1.0, float(E.max()))
    rng = np.random.default_rng(cfg.seed)

    kept_P = [P.copy()[None]]
    kept_E = [E.copy()[None]]
    kept_s = [np.zeros(1, dtype=np.int64)]
    n_kept = 1
    stride = cfg.thin or 1
    auto_thin = cfg.thin is None

    history = [(0, 0.0, 0.0)]
    info = np.zeros(6, dtype=np.int64)
    s = 0
    converged = N == 1  # a single component has no partner to mix with
    while not converged and s < cfg.max_iterations:
        T = min(cfg.check_every, cfg.max_iterations - s)
        js = rng.integers(0, N - 1, size=(T, N))
        xs = rng.beta(cfg.beta, cfg.beta, size=(T, N))
        sweep_ids = np.arange(s + 1, s + T + 1)
        keep = sweep_ids % stride == 0
        n_keep = int(keep.sum())
        out_P = np.empty((n_keep, K, N))
        out_E = np.empty((n_keep, N, G))
        n_out = _sweeps(P, E, js, xs, keep, out_P, out_E, Pmin, Pmax, Emin, Emax,
                        cfg.segment_envelope, e_tol, info)
        if info[0] != _OK:
            _raise_kernel_error(info, s)
        kept_P.append(out_P[:n_out])
        kept_E.append(out_E[:n_out])
        kept_s.append(sweep_ids[keep][:n_out])
        n_kept += n_out
        s += T

        if auto_thin and n_kept > cfg.max_kept:
            stride *= 2
            Ps, Es, ss = (np.concatenate(x) for x in (kept_P, kept_E, kept_s))
            sel = ss % stride == 0
            kept_P, kept_E, kept_s = [Ps[sel]], [Es[sel]], [ss[sel]]
            n_kept = int(sel.sum())

        size_P = sfs_size(Pmin, Pmax)
        size_E = sfs_size(Emin, Emax)
        prev = history[-1]
        history.append((s, size_P, size_E))
        if T == cfg.check_every:
            grew_P = size_P - prev[1]
            grew_E = size_E - prev[2]
            converged = grew_P < cfg.epsilon and (not cfg.track_E_size or grew_E < cfg.epsilon)

    if info[4]:
        warnings.warn(f"{info[4]} mixing steps had identical P columns; lower bound capped at {LO_CAP:g}",
                      DegeneracyWarning, stacklevel=2)
    if info[5]:
        warnings.warn(f"{info[5]} mixing steps hit an all-zero E row (unused component); "
                      "upper bound clamped", DegeneracyWarning, stacklevel=2)

    chain = SfsChain(
        samples_P=np.concatenate(kept_P),
        samples_E=np.concatenate(kept_E),
        sample_iterations=np.concatenate(kept_s),
        thinning=stride,
        iterations=s,
        converged=bool(converged),
        size_history=np.array(history, dtype=float),
        lo_unbounded_count=int(info[4]),
        hi_clamped_count=int(info[5]),
    )
    envelope = SfsEnvelope(Pmin, Pmax, Emin, Emax, sfs_size(Pmin, Pmax), sfs_size(Emin, Emax))
    return chain, envelope


def _raise_kernel_error(info, offset):
    status, i, j, s = (int(v) for v in info[:4])
    where = f"sweep {offset + s + 1}, components ({i}, {j})"
    if status == _DEGENERATE:
        raise DegenerateComponentError(f"degenerate component pair at {where}")
    side = "P" if status == _NEG_P else "E"
    raise NegativeEntryError(f"{side} entry below the clamp tolerance at {where}")


def run_chains(F0, cfg, seeds):
    """Independent chains from ``F0``, one per seed, with merged envelope."""
    results = [run_sampler(F0, replace(cfg, seed=int(sd))) for sd in seeds]
    env = results[0][1]
    for _, e in results[1:]:
        env = env.merge(e)
    return [c for c, _ in results], env


def sample_sfs(F, cfg=None):
    """Normalize ``F`` if needed, then :func:`run_sampler`."""
    if not is_column_normalized(np.asarray(F.P)):
        F = normalize_columns(F)
    return run_sampler(F, cfg)

