"""Nearest EDM with fixed arm lengths and an embedding-dimension bound.

The problem is::

    min  1/2 ||H o (D - G)||_F^2
    s.t. diag(D) = 0,  D in the EDM sign cone,
         D[j, j+1] = L_j^2 for every arm constraint,
         rank(J D J) <= r.

The rank bound is handled by the majorized penalty method: the concave
penalty ``q`` is replaced by its linearization at the current iterate, so
each outer step is a convex projection problem.  That projection is solved
by Dykstra's alternating projections between the affine constraint set and
the cone.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ._dykstra import dykstra
from .edm_core import WeightSpec, check_sdm, cmds_embed, edm_from_points, rank_penalty
from .errors import DescentViolationError, ValidationError

logger = logging.getLogger(__name__)

__all__ = [
    "NedmProblem",
    "SolveResult",
    "SolverConfig",
    "SubproblemResult",
    "check_eps_optimality",
    "project_affine",
    "solve",
    "solve_subproblem",
]


@dataclass
class NedmProblem:
    """Observations and constraints of one NEDM instance.

    ``arm_constraints`` holds ``(j, L_j)`` pairs with zero-based ``j``; each
    fixes the entry ``(j, j + 1)`` to ``L_j**2``.
    """

    G: np.ndarray
    arm_constraints: list = field(default_factory=list)
    target_rank: int = 3
    weights: WeightSpec = field(default_factory=WeightSpec)

    def __post_init__(self):
        self.G = check_sdm(self.G)
        n = self.G.shape[0]
        if self.target_rank not in (2, 3):
            raise ValidationError("target_rank must be 2 or 3")
        self.arm_constraints = [(int(j), float(L)) for j, L in self.arm_constraints]
        idx = [j for j, _ in self.arm_constraints]
        if len(set(idx)) != len(idx):
            raise ValidationError("arm-constraint indices must be distinct")
        for j, L in self.arm_constraints:
            if not 0 <= j < n - 1:
                raise ValidationError(f"arm-constraint index {j} outside 0..{n - 2}")
            if L <= 0:
                raise ValidationError(f"arm length must be positive, got {L}")
        if self.weights.mode == "general" and self.weights.H.shape != self.G.shape:
            raise ValidationError("weight matrix shape does not match G")

    @property
    def n(self):
        return self.G.shape[0]

    @property
    def scale(self):
        """Frobenius norm of ``G``; tolerances are relative to it."""
        return max(float(np.linalg.norm(self.G)), 1e-300)


@dataclass
class SolverConfig:
    """Penalty schedule and tolerances.

    ``inner_tol``, ``rank_tol`` and the descent slack are relative to
    ``||G||_F``.  ``penalty_initial=None`` picks the starting penalty from
    the convex relaxation (see :func:`solve`).
    """

    penalty_initial: float | None = None
    penalty_growth: float = 4.0
    penalty_max: float = 1e12
    outer_max_iters: int = 100
    inner_max_iters: int = 20000
    inner_tol: float | None = None
    rank_tol: float = 1e-8
    descent_check: bool = True
    descent_tol: float = 1e-12

    def __post_init__(self):
        if self.penalty_growth <= 1:
            raise ValidationError("penalty_growth must exceed 1")
        for name in ("penalty_max", "outer_max_iters", "inner_max_iters", "rank_tol", "descent_tol"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.penalty_initial is not None and self.penalty_initial <= 0:
            raise ValidationError("penalty_initial must be positive")
        if self.inner_tol is not None and self.inner_tol <= 0:
            raise ValidationError("inner_tol must be positive")

    def inner_tolerance(self, n):
        # 1e-14 n keeps a ~50x margin over the rounding floor of the Dykstra change
        return self.inner_tol if self.inner_tol is not None else 1e-14 * n


@dataclass
class SubproblemResult:
    D: np.ndarray
    iterations: int
    converged: bool


@dataclass
class SolveResult:
    """Output of :func:`solve`.

    ``objective_history[k]`` is the penalized objective ``f + c_k q`` at the
    ``k``-th accepted iterate, with ``c_k = penalty_history[k]`` the penalty
    used for the step that follows it.  ``fit_history`` and
    ``rank_history`` store ``f`` and ``q`` separately.
    """

    D_star: np.ndarray
    objective_history: list
    fit_history: list
    rank_history: list
    penalty_history: list
    penalty_value: float
    outer_iters: int
    inner_iters: int
    eps_optimal: bool
    inner_converged: bool
    wallclock: float
    rank_threshold: float = 0.0

    @property
    def converged(self):
        return self.eps_optimal

    def descent_gaps(self):
        """``F_{c_k}(D^{k+1}) - F_{c_k}(D^k)`` for every accepted step (all <= slack)."""
        gaps = []
        for k in range(len(self.objective_history) - 1):
            c = self.penalty_history[k]
            after = self.fit_history[k + 1] + c * self.rank_history[k + 1]
            gaps.append(after - self.objective_history[k])
        return gaps


def project_affine(A, arm_constraints):
    """Symmetrize, zero the diagonal, and pin the arm-length entries."""
    X = 0.5 * (A + A.T)
    np.fill_diagonal(X, 0.0)
    for j, L in arm_constraints:
        X[j, j + 1] = X[j + 1, j] = L * L
    return X


def solve_subproblem(target, problem, cfg=None):
    """Project ``target`` onto the convex feasible set of ``problem``.

    Minimizes ``1/2 ||D - target||_F^2`` over hollow matrices in the EDM
    cone with the arm-length entries fixed, by Dykstra's method.  The
    affine set needs no correction term, so only the cone step carries one.
    The returned matrix is exactly affine-feasible; iteration stops once
    both the cycle change and the distance to the last cone iterate drop
    below ``inner_tol * ||G||_F``.
    """
    cfg = cfg or SolverConfig()
    target = np.ascontiguousarray(target, dtype=float)
    cons = problem.arm_constraints
    ci = np.array([j for j, _ in cons], dtype=np.int64)
    cv = np.array([L * L for _, L in cons], dtype=float)
    tol = cfg.inner_tolerance(problem.n) * problem.scale
    D, iterations, converged = dykstra(target, ci, ci + 1, cv, tol, int(cfg.inner_max_iters))
    return SubproblemResult(D, int(iterations), bool(converged))


def _fit(D, problem):
    R = D - problem.G
    if problem.weights.mode == "general":
        R = problem.weights.H * R
    return 0.5 * float(np.sum(R * R))


def _fit_gradient(D, problem):
    R = D - problem.G
    if problem.weights.mode == "general":
        H = problem.weights.H
        R = H * H * R
    return R


def _majorizer_weight(problem):
    """Scalar ``w`` with ``||H o X||^2 <= w^2 ||X||^2`` for every ``X``."""
    if problem.weights.mode == "uniform":
        return 1.0
    return float(problem.weights.diagonal_weight(problem.n).max())


def _majorized_step(D, c, problem, cfg, omega):
    """Minimize the linearized penalty majorizer at ``D``."""
    _, g = rank_penalty(D, problem.target_rank)
    if problem.weights.mode == "uniform":
        target = problem.G - c * g
    else:
        target = D - (_fit_gradient(D, problem) + c * g) / omega**2
    return solve_subproblem(target, problem, cfg)


def _convex_relaxation(problem, cfg, omega):
    """Solution of the problem without the rank bound."""
    sub = solve_subproblem(problem.G, problem, cfg)
    D, inner, ok = sub.D, sub.iterations, sub.converged
    if problem.weights.mode == "general":
        for _ in range(cfg.outer_max_iters):
            nxt = solve_subproblem(D - _fit_gradient(D, problem) / omega**2, problem, cfg)
            inner += nxt.iterations
            ok = ok and nxt.converged
            done = np.linalg.norm(nxt.D - D) < cfg.inner_tolerance(problem.n) * problem.scale
            D = nxt.D
            if done:
                break
    return D, inner, ok


def _initial_penalty(D_convex, problem):
    """Starting penalty from the bound ``c >= (f(D_r) - f(D*)) / eps``.

    ``D*`` is the convex relaxation; ``D_r`` is its rank-``r`` cMDS
    truncation, and ``eps`` is a tenth of the current rank penalty.
    """
    q, _ = rank_penalty(D_convex, problem.target_rank)
    if q <= 0:
        return 1.0
    emb = cmds_embed(D_convex, problem.target_rank)
    D_r = edm_from_points(emb.points)
    gap = _fit(D_r, problem) - _fit(D_convex, problem)
    # the truncation may beat D* on f when D* is itself only nearly feasible
    gap = max(gap, q * q)
    return 10.0 * gap / q


def solve(problem, cfg=None, warm_start=None):
    """Majorized penalty method for the rank-constrained NEDM problem.

    The loop starts from the convex relaxation (or from the feasible
    projection of ``warm_start``).  At each iterate the rank penalty is
    linearized via :func:`rank_penalty`, the linear term is folded into a
    shifted target and :func:`solve_subproblem` returns the next iterate.
    The penalty grows by ``penalty_growth`` whenever ``q`` fails to drop by a
    factor of ten.  The loop stops once ``q <= rank_tol * ||G||_F``.

    With ``descent_check`` on, every accepted step satisfies
    ``F_c(D^{k+1}) <= F_c(D^k) + descent_tol * max(1, |F_c(D^k)|)`` where
    ``F_c = f + c q``.  A step failing that test is re-solved with a tighter
    inner tolerance; if it still fails by more than the inner-solver
    accuracy a :class:`DescentViolationError` is raised, otherwise the
    iterate is treated as stationary for the current penalty.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    r = problem.target_rank
    omega = _majorizer_weight(problem)
    rank_threshold = cfg.rank_tol * problem.scale

    D_convex, inner_total, inner_ok = _convex_relaxation(problem, cfg, omega)
    if warm_start is not None:
        sub = solve_subproblem(np.asarray(warm_start, dtype=float), problem, cfg)
        D, inner_total = sub.D, inner_total + sub.iterations
        inner_ok = inner_ok and sub.converged
    else:
        D = D_convex
    c = cfg.penalty_initial if cfg.penalty_initial is not None else _initial_penalty(D_convex, problem)
    c = min(c, cfg.penalty_max)

    q, _ = rank_penalty(D, r)
    f = _fit(D, problem)
    fits, ranks, pens, objs = [f], [q], [c], [f + c * q]
    outer = 0
    strict = SolverConfig(**{**cfg.__dict__, "inner_tol": cfg.inner_tolerance(problem.n) * 1e-2,
                             "inner_max_iters": cfg.inner_max_iters * 5})

    while q > rank_threshold and outer < cfg.outer_max_iters:
        outer += 1
        F_old = f + c * q
        sub = _majorized_step(D, c, problem, cfg, omega)
        inner_total += sub.iterations
        D_new = sub.D
        q_new, _ = rank_penalty(D_new, r)
        f_new = _fit(D_new, problem)
        slack = cfg.descent_tol * max(1.0, abs(F_old))
        stationary = False
        if cfg.descent_check and f_new + c * q_new > F_old + slack:
            sub = _majorized_step(D, c, problem, strict, omega)
            inner_total += sub.iterations
            D_new = sub.D
            q_new, _ = rank_penalty(D_new, r)
            f_new = _fit(D_new, problem)
            excess = f_new + c * q_new - F_old
            if excess > slack:
                accuracy = 1e-6 * max(1.0, abs(F_old))
                if excess > accuracy:
                    raise DescentViolationError(
                        f"penalized objective rose by {excess:.3e} at outer iteration {outer}")
                stationary = True
        inner_ok = inner_ok and sub.converged

        if stationary:
            logger.debug("outer %d: no further descent at c=%.3e", outer, c)
            if c >= cfg.penalty_max:
                break
            c = min(c * cfg.penalty_growth, cfg.penalty_max)
            # the record of D^k now carries the penalty of its next step
            pens[-1], objs[-1] = c, f + c * q
            continue

        q_prev = q
        D, f, q = D_new, f_new, q_new
        if q > rank_threshold and q > 0.1 * q_prev:
            c = min(c * cfg.penalty_growth, cfg.penalty_max)
        fits.append(f)
        ranks.append(q)
        pens.append(c)
        objs.append(f + c * q)

    return SolveResult(
        D_star=D,
        objective_history=objs,
        fit_history=fits,
        rank_history=ranks,
        penalty_history=pens,
        penalty_value=float(q),
        outer_iters=outer,
        inner_iters=inner_total,
        eps_optimal=bool(q <= rank_threshold),
        inner_converged=inner_ok,
        wallclock=time.perf_counter() - t0,
        rank_threshold=rank_threshold,
    )


def check_eps_optimality(result, eps):
    """``True`` iff the final rank penalty is within ``eps``."""
    return bool(result.penalty_value <= eps)
