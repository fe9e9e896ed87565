"""Comparison methods: squared-range least squares and angle-chain sensing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentUnderdeterminedError, ValidationError

__all__ = ["AngleReading", "SrlsResult", "srls_localize", "srls_objective", "tpsm_localize"]


@dataclass
class AngleReading:
    """Joint angles as an inclinometer chain would report them.

    ``joint_angles[j]`` is the pitch of segment ``j`` relative to segment
    ``j + 1`` (tip first, like the arm lengths); the last entry is the
    pitch of the base segment above the horizontal.
    """

    joint_angles: np.ndarray
    turntable_azimuth: float

    def __post_init__(self):
        self.joint_angles = np.asarray(self.joint_angles, dtype=float).ravel()
        if not (np.all(np.isfinite(self.joint_angles)) and math.isfinite(self.turntable_azimuth)):
            raise ValidationError("angle reading must be finite")


@dataclass
class SrlsResult:
    point: np.ndarray
    multiplier: float
    converged: bool


def srls_objective(x, anchors, ranges):
    d2 = np.sum((np.asarray(anchors) - x) ** 2, axis=-1)
    return float(np.sum((d2 - np.asarray(ranges) ** 2) ** 2))


def srls_localize(anchors, ranges, max_bisections=200, full_output=False):
    """Global minimizer of ``sum_j (||x - a_j||^2 - delta_j^2)^2``.

    Writing ``y = (x, ||x||^2)`` turns the problem into a least-squares
    fit ``||A y - b||^2`` under the quadratic constraint
    ``y^T D y + 2 f^T y = 0``.  Its solution is ``y(lam) = (A^T A + lam D)^{-1}
    (A^T b - lam f)`` where ``lam`` is the root of the decreasing function
    ``phi(lam) = y^T D y + 2 f^T y`` on the interval where ``A^T A + lam D``
    is positive definite; the root is found by bisection.
    """
    anchors = np.asarray(anchors, dtype=float)
    ranges = np.asarray(ranges, dtype=float).ravel()
    k, r = anchors.shape
    if k != len(ranges):
        raise ValidationError("one range per anchor required")
    if k < r + 1:
        raise AlignmentUnderdeterminedError(f"SR-LS needs at least {r + 1} anchors in {r}D")
    centred = anchors - anchors.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[-1] <= 1e-9 * max(sv[0], 1e-300):
        raise AlignmentUnderdeterminedError("anchors are affinely degenerate")

    # shifting to the anchor centroid conditions A^T A without changing the minimizer
    shift = anchors.mean(axis=0)
    a = anchors - shift
    A = np.hstack([-2.0 * a, np.ones((k, 1))])
    b = ranges**2 - np.sum(a * a, axis=1)
    Dm = np.diag(np.r_[np.ones(r), 0.0])
    f = np.r_[np.zeros(r), -0.5]
    AtA = A.T @ A
    Atb = A.T @ b

    def y_of(lam):
        return np.linalg.solve(AtA + lam * Dm, Atb - lam * f)

    def phi(lam):
        y = y_of(lam)
        return y @ Dm @ y + 2.0 * f @ y

    # positive-definiteness bound: -1 / lambda_max(AtA^{-1/2} D AtA^{-1/2})
    w, V = np.linalg.eigh(AtA)
    inv_sqrt = (V / np.sqrt(w)) @ V.T
    lam_max = np.linalg.eigvalsh(inv_sqrt @ Dm @ inv_sqrt).max()
    lo = -1.0 / lam_max
    span = max(1.0, abs(lo))
    lo_eval = lo + 1e-12 * span
    hi = max(1.0, abs(lo))
    for _ in range(200):
        if phi(hi) < 0:
            break
        hi *= 2.0
    converged = True
    if phi(lo_eval) <= 0:
        # hard case: the root sits at the end of the interval
        lam = lo_eval
    else:
        left, right = lo_eval, hi
        converged = False
        for _ in range(max_bisections):
            mid = 0.5 * (left + right)
            if phi(mid) > 0:
                left = mid
            else:
                right = mid
            if right - left <= 1e-15 * max(1.0, abs(mid)):
                converged = True
                break
        lam = 0.5 * (left + right)
    point = y_of(lam)[:r] + shift
    if full_output:
        return SrlsResult(point, float(lam), converged)
    return point


def tpsm_localize(arm_lengths, reading, base):
    """Forward kinematics of the boom from the turntable outward.

    Returns the joint positions tip first, matching the scene ordering.
    """
    L = np.asarray(arm_lengths, dtype=float).ravel()
    rel = reading.joint_angles
    if len(rel) != len(L):
        raise ValidationError("one joint angle per arm segment required")
    az = reading.turntable_azimuth
    # accumulated pitch of segment j adds the relative angles from the base up to j
    pitch = np.cumsum(rel[::-1])[::-1]
    steps = L[:, None] * np.column_stack([
        np.cos(pitch) * math.cos(az), np.cos(pitch) * math.sin(az), np.sin(pitch)])
    offsets = np.cumsum(steps[::-1], axis=0)[::-1]
    return np.asarray(base, dtype=float) + offsets
