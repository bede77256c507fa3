import numpy as np
import pytest

from nmfsfs.model import Factorization, normalize_columns

ACCEPTANCE = []


def record(criterion, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_factorization(rng, K, G, N, scale=1.0, zeros=0.0):
    P = rng.uniform(0.01, 1.0, size=(K, N))
    E = rng.uniform(0.01, 1.0, size=(N, G)) * scale
    if zeros:
        P[rng.uniform(size=P.shape) < zeros] = 0.0
        E[rng.uniform(size=E.shape) < zeros] = 0.0
        P[rng.integers(K, size=N), np.arange(N)] += 0.5
        E[np.arange(N), rng.integers(G, size=N)] += 0.5 * scale
    return normalize_columns(Factorization(P, E))


def mixing(N, i, j, lam):
    """A_ij(lambda) written out entry by entry."""
    A = np.zeros((N, N))
    for u in range(N):
        for v in range(N):
            if u == v == i:
                A[u, v] = 1 - lam
            elif u == v:
                A[u, v] = 1.0
            elif u == j and v == i:
                A[u, v] = lam
    return A


def grid_minima(P, E, i, j, lams):
    """Smallest entry of P A and of inv(A) E for each lambda, by explicit products."""
    N = P.shape[1]
    A = np.array([mixing(N, i, j, lam) for lam in lams])
    PA = P[None] @ A
    AinvE = np.linalg.inv(A) @ E[None]
    return PA.min(axis=(1, 2)), AinvE.min(axis=(1, 2))


def grid_feasible(P, E, i, j, lams, tol=1e-12):
    """Feasibility of each lambda; E is allowed ``tol`` scaled by max(1, max E)."""
    p, e = grid_minima(P, E, i, j, lams)
    return (p >= -tol) & (e >= -tol * max(1.0, E.max()))
