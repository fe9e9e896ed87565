"""JSON scene and measurement files for single-pose localization.

A scene file is a JSON object::

    {"units": "m",
     "anchors": [[x, y, z], ...],        # first anchor is the turntable
     "priors": [[x, y, z], ...],         # tip first
     "arm_lengths": [L1, ..., Lp],       # tip first
     "distances": [[i, j, delta], ...]}  # 1-based point indices

Targets are points ``1..p`` and anchors ``p+1..n``.  Each distance record
joins one target and one anchor.  ``distances`` may instead live in a
separate measurement file holding an object with that single key.
"""

from __future__ import annotations

import json
import math

from ..errors import ParseError, ValidationError
from ..posture import ManipulatorScene, RangeMeasurements


def _load_json(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc.msg}", exc.lineno) from None
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: top level must be an object")
    return data


def scene_from_mapping(data):
    for key in ("units", "anchors", "priors", "arm_lengths"):
        if key not in data:
            raise ValidationError(f"scene is missing {key!r}")
    try:
        return ManipulatorScene(anchors=data["anchors"], priors=data["priors"],
                                arm_lengths=data["arm_lengths"], units=data["units"])
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad scene: {exc}") from None


def measurements_from_records(records, scene):
    """:class:`RangeMeasurements` from ``[i, j, delta]`` records with 1-based indices."""
    delta = {}
    for rec in records:
        if not (isinstance(rec, (list, tuple)) and len(rec) == 3):
            raise ValidationError(f"distance records look like [i, j, delta], got {rec!r}")
        i, j, d = rec
        if not (float(i).is_integer() and float(j).is_integer()):
            raise ValidationError(f"point indices must be integers, got {rec!r}")
        i, j = int(i) - 1, int(j) - 1
        if i > j:
            i, j = j, i
        if not (0 <= i < scene.p <= j < scene.n):
            raise ValidationError(
                f"record {rec!r} must join a target (1..{scene.p}) and an anchor "
                f"({scene.p + 1}..{scene.n})")
        d = float(d)
        if not math.isfinite(d):
            raise ValidationError(f"range must be finite, got {rec!r}")
        if (i, j) in delta:
            raise ValidationError(f"pair ({i + 1}, {j + 1}) measured twice")
        delta[(i, j)] = d
    return RangeMeasurements(delta)


def load_scene(path, measurements=None):
    """Read a scene and its ranges; returns ``(scene, RangeMeasurements)``."""
    data = _load_json(path)
    scene = scene_from_mapping(data)
    if measurements is not None:
        records = _load_json(measurements).get("distances")
    else:
        records = data.get("distances")
    if records is None:
        raise ValidationError("no 'distances' records found")
    return scene, measurements_from_records(records, scene)


def scene_to_mapping(scene, meas=None):
    out = {
        "units": scene.units,
        "anchors": scene.anchors.tolist(),
        "priors": scene.priors.tolist(),
        "arm_lengths": scene.arm_lengths.tolist(),
    }
    if meas is not None:
        out["distances"] = [[i + 1, j + 1, d] for (i, j), d in sorted(meas.delta.items())]
    return out
