"""Closed-form SFS for rank-2 factorizations.

For N = 2 the two columns of P move independently along the line through
P_1 and P_2: column 1 over ``interval_12`` and column 2 over ``interval_21``.
Every entry of ``P B`` and ``B^-1 E``, with

    B = [[1 - a, b],
         [a,     1 - b]],   a in interval_12, b in interval_21,

is monotone in each of ``a`` and ``b`` separately, so the per-entry extremes
over the feasible rectangle sit at its four corners. The P entries are affine
in (a, b). For E, write the columns of P̃ as points t1 < d < t2 on the line;
the weight on column 1 of a data point d is ``s (t2 - d) / (t2 - t1)``, which
is nondecreasing in both t1 and t2 (and symmetrically for column 2).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .model import Factorization, ShapeError
from .sampler import FeasibleInterval, SfsEnvelope, feasible_interval, sfs_size


@dataclass
class Rank2Sfs:
    interval_12: FeasibleInterval
    interval_21: FeasibleInterval
    envelope: SfsEnvelope


def mixing_matrix(a, b):
    """Column 1 moved by ``a`` toward column 2, column 2 moved by ``b`` toward column 1."""
    return np.array([[1.0 - a, b], [a, 1.0 - b]])


def rank2_sfs(F):
    """Exact SFS envelope of a column-normalized rank-2 factorization."""
    if F.rank != 2:
        raise ShapeError(f"rank2_sfs needs N = 2, got N = {F.rank}")
    iv12 = feasible_interval(F, 0, 1)
    iv21 = feasible_interval(F, 1, 0)
    P = np.asarray(F.P)
    E = np.asarray(F.E)
    Ps, Es = [], []
    for a, b in product((iv12.lo, iv12.hi), (iv21.lo, iv21.hi)):
        B = mixing_matrix(a, b)
        Ps.append(P @ B)
        # a + b = 1 puts both columns on the same point, which only happens
        # for rank-1 data; E is constant along the edges into that corner,
        # so the neighbouring corners already hold its values
        if abs(1.0 - a - b) > 1e-12:
            Es.append(np.linalg.solve(B, E))
    Ps = np.maximum(np.array(Ps), 0.0)
    Es = np.maximum(np.array(Es), 0.0)
    env = SfsEnvelope(
        Ps.min(axis=0), Ps.max(axis=0), Es.min(axis=0), Es.max(axis=0),
        avg_size_P=0.0, avg_size_E=0.0,
    )
    env.avg_size_P = sfs_size(env.P_min, env.P_max)
    env.avg_size_E = sfs_size(env.E_min, env.E_max)
    return Rank2Sfs(iv12, iv21, env)


def rank2_solution(F, a, b):
    """The feasible factorization at corner/point ``(a, b)`` of the rectangle."""
    B = mixing_matrix(a, b)
    return Factorization(np.asarray(F.P) @ B, np.linalg.solve(B, np.asarray(F.E)))
