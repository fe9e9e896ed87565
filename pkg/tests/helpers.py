"""Shared oracles and generators for the test suite."""

import cvxpy as cp
import numpy as np

from edmpose.edm_core import edm_from_points
from edmpose.nedm_solver import NedmProblem


def random_instance(rng, n_range=(4, 9), noise=0.1, constrained=True):
    """Noisy EDM of a random chain-plus-anchors configuration."""
    n = int(rng.integers(*n_range))
    r = int(rng.integers(2, 4))
    X = rng.standard_normal((n, r)) * rng.uniform(0.5, 3.0)
    G = edm_from_points(X) * (1 + noise * rng.standard_normal((n, n)))
    G = np.abs(0.5 * (G + G.T))
    np.fill_diagonal(G, 0.0)
    cons = []
    if constrained:
        k = int(rng.integers(0, n))
        cons = [(j, float(np.linalg.norm(X[j + 1] - X[j]))) for j in sorted(
            rng.choice(n - 1, size=min(k, n - 1), replace=False))]
    return NedmProblem(G, cons, target_rank=r)


def sample_cone(rng, n):
    """Random member of the sign cone: an EDM, a centred NSD term and ``a e^T + e a^T``."""
    X = rng.standard_normal((n, rng.integers(1, n)))
    M = rng.standard_normal((n, rng.integers(1, n + 1)))
    J = np.eye(n) - np.ones((n, n)) / n
    a = rng.standard_normal(n)
    return (edm_from_points(X) * rng.uniform(0, 3) - J @ M @ M.T @ J * rng.uniform(0, 2)
            + a[:, None] + a[None, :])


def cvx_subproblem(T, problem):
    """min 1/2 ||D - T||^2 over hollow D with -V^T D V PSD and pinned arm entries."""
    n = problem.n
    # orthonormal basis of the complement of e
    Q, _ = np.linalg.qr(np.column_stack([np.ones(n), np.eye(n)[:, : n - 1]]))
    V = Q[:, 1:]
    D = cp.Variable((n, n), symmetric=True)
    cons = [cp.diag(D) == 0, -(V.T @ D @ V) >> 0]
    cons += [D[j, j + 1] == L * L for j, L in problem.arm_constraints]
    # first-order SCS at tight tolerance; interior-point solvers stall near 1e-6 here
    cp.Problem(cp.Minimize(0.5 * cp.sum_squares(D - T)), cons).solve(
        solver=cp.SCS, eps_abs=1e-11, eps_rel=1e-11, max_iters=1_000_000)
    return D.value
