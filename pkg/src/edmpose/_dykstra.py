"""Compiled Dykstra loop for the convex NEDM subproblem.

Mirrors ``project_cone`` / ``project_affine`` from the public modules; the
test suite checks the two agree.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def _pin(x, ci, cj, cv):
    n = x.shape[0]
    for k in range(n):
        x[k, k] = 0.0
    for t in range(ci.shape[0]):
        x[ci[t], cj[t]] = cv[t]
        x[cj[t], ci[t]] = cv[t]


@numba.njit(cache=True)
def dykstra(target, ci, cj, cv, tol, max_iters):
    """Returns ``(D, iterations, converged)``; see ``solve_subproblem``."""
    n = target.shape[0]
    x = 0.5 * (target + target.T)
    _pin(x, ci, cj, cv)
    p = np.zeros((n, n))
    means = np.empty(n)
    C = np.empty((n, n))
    for it in range(1, max_iters + 1):
        a = x + p
        for i in range(n):
            means[i] = a[:, i].mean()
        total = means.mean()
        for i in range(n):
            for j in range(n):
                C[i, j] = 0.5 * (a[i, j] + a[j, i]) - means[i] - means[j] + total
        w, V = np.linalg.eigh(C)
        y = a - C
        for k in range(n):
            if w[k] < 0.0:
                v = V[:, k]
                y += w[k] * np.outer(v, v)
        y = 0.5 * (y + y.T)
        p = a - y
        x_new = y.copy()
        _pin(x_new, ci, cj, cv)
        change = max(np.sqrt(np.sum((x_new - x) ** 2)), np.sqrt(np.sum((x_new - y) ** 2)))
        x = x_new
        if change < tol:
            return x, it, True
    return x, max_iters, False
