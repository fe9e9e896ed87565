"""Synthetic manipulator postures."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..baselines import AngleReading, tpsm_localize
from ..errors import ValidationError
from ..posture import ManipulatorScene

# Large manipulator of the simulations: 9, 7, 7, 9, 9 m counted from the
# turntable, stored tip first like every arm-length array in the package.
BOOM_ARM_LENGTHS = (9.0, 9.0, 7.0, 7.0, 9.0)

# Turntable at the origin, two ground anchors, one raised anchor.
DEFAULT_ANCHORS = ((0.0, 0.0, 0.0), (0.0, 30.0, 0.0), (30.0, 30.0, 0.0), (15.0, 12.0, 18.0))

POSE_MODES = ("planar-random", "angles")


@dataclass
class Pose:
    """True joint positions (tip first), the angles that produced them, and the scene."""

    joints: np.ndarray
    angles: AngleReading
    scene: ManipulatorScene


def _ball_offsets(rng, count, radius):
    direction = rng.standard_normal((count, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return direction * (radius * rng.random(count) ** (1.0 / 3.0))[:, None]


def gen_pose(arm_lengths, mode="planar-random", rng=None, angles=None,
             anchors=DEFAULT_ANCHORS, prior_radius=0.0, units="m",
             azimuth_range=(math.radians(10), math.radians(80)),
             base_pitch_range=(math.radians(30), math.radians(75)),
             relative_pitch_range=(math.radians(-70), math.radians(10))):
    """Kinematically valid boom posture plus a scene with perturbed priors.

    ``planar-random`` draws a turntable azimuth and a pitch for each joint,
    so all joints share one vertical plane.  ``angles`` takes an explicit
    :class:`AngleReading`.  Priors are the truth displaced uniformly inside
    a ball of radius ``prior_radius``.

    The angle draws happen before the prior draws, so the truth depends only
    on ``rng``'s state and not on ``prior_radius``.
    """
    L = np.asarray(arm_lengths, dtype=float).ravel()
    if np.any(L <= 0):
        raise ValidationError("arm lengths must be positive")
    rng = np.random.default_rng() if rng is None else rng
    anchors = np.asarray(anchors, dtype=float)
    if mode == "planar-random":
        p = len(L)
        az = rng.uniform(*azimuth_range)
        rel = rng.uniform(*relative_pitch_range, size=p)
        rel[-1] = rng.uniform(*base_pitch_range)
        angles = AngleReading(rel, az)
    elif mode == "angles":
        if angles is None:
            raise ValidationError("mode 'angles' requires an AngleReading")
    else:
        raise ValidationError(f"unknown pose mode {mode!r}")
    joints = tpsm_localize(L, angles, anchors[0])
    priors = joints + _ball_offsets(rng, len(L), prior_radius) if prior_radius > 0 else joints.copy()
    scene = ManipulatorScene(anchors=anchors, priors=priors, arm_lengths=L, units=units)
    return Pose(joints, angles, scene)


def true_ranges(joints, anchors):
    """``(p, m)`` array of target-to-anchor distances."""
    return np.linalg.norm(np.asarray(joints)[:, None, :] - np.asarray(anchors)[None, :, :], axis=2)
