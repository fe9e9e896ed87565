"""Posture positioning pipelines for multi-joint manipulators.

Point numbering follows the manipulator: targets ``0..p-1`` run from the
tip of the first arm segment down to the last joint before the turntable,
and anchors ``p..n-1`` follow.  ``anchors[0]`` is the turntable joint, so
the segment ``p`` (``arm_lengths[p-1]``) joins target ``p-1`` to it.

Two pipelines are provided.  :func:`epp_localize` solves the 3D NEDM
problem and aligns the cMDS embedding to the anchors.  :func:`cepp_localize`
first rotates everything into the vertical plane that holds the boom,
solves a 2D problem there and maps the result back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nedm_solver
from .edm_core import cmds_embed, edm_from_points, procrustes_align
from .errors import (
    IncompleteMeasurementError,
    InfeasibleProjectionError,
    PlaneUndeterminedError,
    ValidationError,
)

__all__ = [
    "ManipulatorScene",
    "PoseEstimate",
    "RangeMeasurements",
    "arm_length_errors",
    "build_G",
    "cepp_localize",
    "epp_from_matrix",
    "epp_localize",
    "fit_vertical_plane",
    "from_plane",
    "project_distance",
    "to_plane",
    "track",
]

UNITS = ("m", "cm")


@dataclass
class ManipulatorScene:
    """Anchors, prior joint estimates and arm lengths.

    ``arm_lengths[j]`` is the distance between point ``j`` and ``j + 1``.
    ``observable`` optionally restricts which target/anchor pairs carry a
    range; unobserved pairs are filled from the priors.
    """

    anchors: np.ndarray
    priors: np.ndarray
    arm_lengths: np.ndarray
    units: str = "m"
    observable: frozenset | None = None

    def __post_init__(self):
        self.anchors = np.atleast_2d(np.asarray(self.anchors, dtype=float))
        self.priors = np.atleast_2d(np.asarray(self.priors, dtype=float))
        self.arm_lengths = np.asarray(self.arm_lengths, dtype=float).ravel()
        if self.units not in UNITS:
            raise ValidationError(f"units must be one of {UNITS}, got {self.units!r}")
        if self.anchors.shape[0] < 1:
            raise ValidationError("scene needs at least one anchor")
        if self.priors.shape[1] != self.anchors.shape[1]:
            raise ValidationError("priors and anchors differ in dimension")
        if len(self.arm_lengths) != self.p:
            raise ValidationError(f"expected {self.p} arm lengths, got {len(self.arm_lengths)}")
        if np.any(self.arm_lengths <= 0):
            raise ValidationError("arm lengths must be positive")
        if not (np.all(np.isfinite(self.anchors)) and np.all(np.isfinite(self.priors))):
            raise ValidationError("scene coordinates must be finite")
        if self.observable is not None:
            self.observable = frozenset((int(i), int(j)) for i, j in self.observable)

    @property
    def p(self):
        return self.priors.shape[0]

    @property
    def n(self):
        return self.p + self.anchors.shape[0]

    @property
    def dim(self):
        return self.anchors.shape[1]

    @property
    def turntable(self):
        return self.anchors[0]

    def observed_pairs(self):
        pairs = [(i, j) for i in range(self.p) for j in range(self.p, self.n)]
        if self.observable is None:
            return pairs
        return [pq for pq in pairs if pq in self.observable]

    def arm_constraints(self):
        return [(j, float(L)) for j, L in enumerate(self.arm_lengths)]


@dataclass
class RangeMeasurements:
    """Target-to-anchor ranges keyed by global point indices ``(i, j)``.

    ``resamples`` counts noise redraws made while simulating the ranges.
    """

    delta: dict
    resamples: int = 0

    def __post_init__(self):
        self.delta = {(int(i), int(j)): float(d) for (i, j), d in self.delta.items()}
        for pair, d in self.delta.items():
            if not d >= 0:
                raise ValidationError(f"range for pair {pair} must be non-negative, got {d}")

    @classmethod
    def from_matrix(cls, ranges, resamples=0):
        """Build from a ``(p, m)`` array of target-by-anchor ranges."""
        ranges = np.asarray(ranges, dtype=float)
        p, m = ranges.shape
        return cls({(i, p + k): ranges[i, k] for i in range(p) for k in range(m)}, resamples)

    def matrix(self, p, n):
        out = np.full((p, n - p), np.nan)
        for (i, j), d in self.delta.items():
            out[i, j - p] = d
        return out


@dataclass
class PoseEstimate:
    """Estimated joint coordinates plus diagnostics.

    ``turntable`` is the estimated position of point ``p`` (the first
    anchor) after alignment; arm-length errors of the last segment are
    measured against it.
    """

    joints: np.ndarray
    turntable: np.ndarray
    range_residuals: np.ndarray
    anchor_residual: float = 0.0
    plane_angle: float | None = None
    converged: bool = True
    method: str = ""
    solve: object = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        out = {
            "method": self.method,
            "joints": [[float(v) for v in row] for row in self.joints],
            "theta": None if self.plane_angle is None else float(self.plane_angle),
            "diagnostics": {
                "range_residuals": [float(v) for v in self.range_residuals],
                "anchor_residual": float(self.anchor_residual),
                "converged": bool(self.converged),
                **self.diagnostics,
            },
        }
        return out


def arm_length_errors(estimate, arm_lengths):
    """``| ||w_{j+1} - w_j|| - L_j |`` for each segment of an estimate."""
    chain = np.vstack([estimate.joints, estimate.turntable[None, :]])
    seg = np.linalg.norm(np.diff(chain, axis=0), axis=1)
    return np.abs(seg - np.asarray(arm_lengths, dtype=float))


def _range_residuals(joints, scene, meas):
    res = np.zeros(scene.p)
    counts = np.zeros(scene.p)
    for (i, j), d in meas.delta.items():
        r = np.linalg.norm(joints[i] - scene.anchors[j - scene.p]) - d
        res[i] += r * r
        counts[i] += 1
    return np.sqrt(res / np.maximum(counts, 1))


def build_G(scene, meas):
    """Observation matrix: exact anchor block, squared ranges, prior block."""
    p, n = scene.p, scene.n
    points = np.vstack([scene.priors, scene.anchors])
    G = edm_from_points(points)
    for pair in scene.observed_pairs():
        if pair not in meas.delta:
            raise IncompleteMeasurementError(pair)
        i, j = pair
        G[i, j] = G[j, i] = meas.delta[pair] ** 2
    return G


def _align_to_anchors(D, scene, r):
    emb = cmds_embed(D, r)
    anchor_idx = list(range(scene.p, scene.n))
    aligned, _ = procrustes_align(emb, anchor_idx, scene.anchors)
    mismatch = aligned.points[anchor_idx] - scene.anchors
    return aligned, float(np.sqrt(np.mean(np.sum(mismatch**2, axis=1)))), emb.degenerate


def epp_localize(scene, meas, use_arm_constraints=True, cfg=None, warm_start=None):
    """EDM posture positioning in 3D.

    ``use_arm_constraints=False`` is EPP1, ``True`` is EPP2.
    """
    est = epp_from_matrix(scene, build_G(scene, meas), use_arm_constraints, cfg, warm_start)
    est.range_residuals = _range_residuals(est.joints, scene, meas)
    return est


def epp_from_matrix(scene, G, use_arm_constraints=True, cfg=None, warm_start=None):
    """EPP on an already assembled observation matrix ``G``."""
    cons = scene.arm_constraints() if use_arm_constraints else []
    problem = nedm_solver.NedmProblem(G, cons, target_rank=scene.dim)
    result = nedm_solver.solve(problem, cfg, warm_start=warm_start)
    aligned, anchor_res, degenerate = _align_to_anchors(result.D_star, scene, scene.dim)
    return PoseEstimate(
        joints=aligned.points[: scene.p],
        turntable=aligned.points[scene.p],
        range_residuals=np.zeros(scene.p),
        anchor_residual=anchor_res,
        converged=result.eps_optimal,
        method="epp2" if use_arm_constraints else "epp1",
        solve=result,
        diagnostics={"outer_iters": result.outer_iters, "rank_penalty": result.penalty_value,
                     "degenerate_spectrum": bool(degenerate)},
    )


def fit_vertical_plane(priors):
    """Angle of the vertical plane through the origin that best fits ``priors``.

    The horizontal projections are fitted by a line through the origin that
    minimizes perpendicular offsets; the result lies in ``(-pi/2, pi/2]``.
    """
    xy = np.atleast_2d(np.asarray(priors, dtype=float))[:, :2]
    if np.all(np.linalg.norm(xy, axis=1) <= 1e-9):
        raise PlaneUndeterminedError("all priors project onto the turntable axis")
    w, V = np.linalg.eigh(xy.T @ xy)
    vx, vy = V[:, -1]
    theta = math.atan2(vy, vx)
    if theta <= -math.pi / 2:
        theta += math.pi
    elif theta > math.pi / 2:
        theta -= math.pi
    return theta


def to_plane(w, theta):
    """Coordinates ``(a, b)`` of ``w`` in the vertical plane at angle ``theta``.

    Implements ``a = sqrt(x^2 + (x tan t)^2) + sin t (y - x tan t)`` with the
    radical signed by ``x``, so points on opposite sides of the turntable
    get opposite abscissae; ``b = z``.
    """
    x, y, z = (float(v) for v in w)
    c = math.cos(theta)
    if abs(c) < 1e-12:
        # tan(theta) diverges; the limit of the formula is the y component
        return np.array([math.copysign(1.0, math.sin(theta)) * y, z])
    t = math.tan(theta)
    a = math.copysign(math.sqrt(x * x + (x * t) ** 2), x) + math.sin(theta) * (y - x * t)
    return np.array([a, z])


def from_plane(q, theta):
    """Inverse of :func:`to_plane` for points lying in the plane."""
    a, b = (float(v) for v in q)
    return np.array([a * math.cos(theta), a * math.sin(theta), b])


def project_distance(delta, anchor, theta, clamp=False):
    """Range to an anchor's planar image, assuming the target lies in the plane.

    ``sqrt(delta^2 - x^2 - y^2 + a^2)`` with ``(x, y)`` the anchor's
    horizontal coordinates and ``a`` its planar abscissa.  A negative
    radicand raises :class:`InfeasibleProjectionError` unless ``clamp``.
    """
    x, y = float(anchor[0]), float(anchor[1])
    a = to_plane(anchor, theta)[0]
    radicand = delta * delta - x * x - y * y + a * a
    if radicand < 0:
        # rounding noise when the anchor lies in the plane
        if radicand >= -1e-12 * max(delta * delta, x * x + y * y, 1.0):
            return 0.0
        if not clamp:
            raise InfeasibleProjectionError(
                f"range {delta:.6g} is shorter than the anchor's offset from the plane",
                deficit=-radicand)
        return 0.0
    return math.sqrt(radicand)


def _planar_scene(scene, meas, clamp):
    origin = scene.turntable
    priors = scene.priors - origin
    anchors = scene.anchors - origin
    theta = fit_vertical_plane(priors)
    planar = ManipulatorScene(
        anchors=np.array([to_plane(w, theta) for w in anchors]),
        priors=np.array([to_plane(w, theta) for w in priors]),
        arm_lengths=scene.arm_lengths,
        units=scene.units,
        observable=scene.observable,
    )
    clamped = 0
    delta = {}
    for (i, j), d in meas.delta.items():
        anchor = anchors[j - scene.p]
        try:
            delta[(i, j)] = project_distance(d, anchor, theta)
        except InfeasibleProjectionError:
            if not clamp:
                raise
            delta[(i, j)] = 0.0
            clamped += 1
    return planar, RangeMeasurements(delta), theta, clamped


def cepp_localize(scene, meas, cfg=None, clamp_infeasible=False, warm_start=None):
    """Coordinate-transformed EPP2 for booms confined to one vertical plane."""
    if scene.dim != 3:
        raise ValidationError("CEPP needs a 3D scene")
    planar, planar_meas, theta, clamped = _planar_scene(scene, meas, clamp_infeasible)
    G = build_G(planar, planar_meas)
    problem = nedm_solver.NedmProblem(G, planar.arm_constraints(), target_rank=2)
    result = nedm_solver.solve(problem, cfg, warm_start=warm_start)
    aligned, anchor_res, degenerate = _align_to_anchors(result.D_star, planar, 2)
    origin = scene.turntable
    back = np.array([from_plane(q, theta) for q in aligned.points]) + origin
    joints = back[: scene.p]
    return PoseEstimate(
        joints=joints,
        turntable=back[scene.p],
        range_residuals=_range_residuals(joints, scene, meas),
        anchor_residual=anchor_res,
        plane_angle=theta,
        converged=result.eps_optimal,
        method="cepp2",
        solve=result,
        diagnostics={"outer_iters": result.outer_iters, "rank_penalty": result.penalty_value,
                     "clamped_ranges": clamped, "degenerate_spectrum": bool(degenerate)},
    )


def track(scene, measurement_sequence, method="epp2", cfg=None, clamp_infeasible=False):
    """Localize a time series, feeding each estimate in as the next priors.

    The previous solution matrix warm-starts each solve.  Yields one
    :class:`PoseEstimate` per time step.
    """
    current = scene
    previous_D = None
    for meas in measurement_sequence:
        if method == "cepp2":
            est = cepp_localize(current, meas, cfg, clamp_infeasible=clamp_infeasible,
                                warm_start=previous_D)
        else:
            est = epp_localize(current, meas, use_arm_constraints=(method == "epp2"), cfg=cfg,
                               warm_start=previous_D)
        previous_D = est.solve.D_star if est.solve is not None else None
        yield est
        current = ManipulatorScene(current.anchors, est.joints, current.arm_lengths,
                                   current.units, current.observable)
