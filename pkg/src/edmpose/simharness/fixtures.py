"""Measured-matrix datasets: text format, bundled pump fixture, and its benchmark.

The format is line based.  ``#`` starts a comment.  Header lines are
``key: value`` pairs (``units``, ``entry_semantics``, ``targets`` and
either ``arm_length_<units>`` for equal segments or ``arm_lengths`` with
one value per segment, tip first).  An ``anchors:`` section follows with
``index: x y z`` lines using 1-based point indices, then a ``matrix:``
section with one row per point, either lower triangular (row ``i`` holds
``i`` entries, diagonal included) or full.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..baselines import srls_localize
from ..edm_core import check_sdm, edm_from_points
from ..errors import ParseError, ValidationError
from ..posture import (
    UNITS,
    ManipulatorScene,
    PoseEstimate,
    RangeMeasurements,
    _range_residuals,
    arm_length_errors,
    cepp_localize,
    epp_from_matrix,
)

SEMANTICS = ("squared", "linear")
SEMIPHYSICAL_METHODS = ("srls", "epp1", "epp2", "cepp2")
FIXTURE_NAME = "semiphysical_pump.txt"


@dataclass
class MatrixDataset:
    """A measured all-pairs matrix plus the scene metadata around it.

    ``entries`` holds the numbers as stored; :meth:`squared` converts them
    to squared distances according to ``semantics``.
    """

    units: str
    semantics: str
    targets: int
    anchors: np.ndarray
    arm_lengths: np.ndarray
    entries: np.ndarray

    def __post_init__(self):
        self.anchors = np.atleast_2d(np.asarray(self.anchors, dtype=float))
        self.arm_lengths = np.asarray(self.arm_lengths, dtype=float).ravel()
        self.entries = np.asarray(self.entries, dtype=float)
        if self.units not in UNITS:
            raise ValidationError(f"units must be one of {UNITS}, got {self.units!r}")
        if self.semantics not in SEMANTICS:
            raise ValidationError(f"entry_semantics must be one of {SEMANTICS}")
        if self.targets < 1:
            raise ValidationError("at least one target is required")
        if len(self.arm_lengths) != self.targets:
            raise ValidationError(f"expected {self.targets} arm lengths, got {len(self.arm_lengths)}")
        n = self.targets + len(self.anchors)
        if self.entries.shape != (n, n):
            raise ValidationError(f"matrix must be {n}x{n}, got {self.entries.shape}")
        check_sdm(self.entries, atol=0.0)

    @property
    def n(self):
        return self.entries.shape[0]

    def squared(self, semantics=None):
        """Squared-distance matrix under ``semantics`` (default: the file's flag)."""
        semantics = self.semantics if semantics is None else semantics
        if semantics not in SEMANTICS:
            raise ValidationError(f"entry_semantics must be one of {SEMANTICS}")
        return self.entries.copy() if semantics == "squared" else self.entries**2


def _numbers(tokens, lineno):
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ParseError(f"expected numbers, got {' '.join(tokens)!r}", lineno) from None


def parse_dataset(text):
    """Parse the text format into a :class:`MatrixDataset`."""
    header = {}
    anchors = {}
    rows = []
    section = None
    last = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        last = lineno
        if line in ("anchors:", "matrix:"):
            section = line[:-1]
            if section in header:
                raise ParseError(f"duplicate section {section!r}", lineno)
            header[section] = lineno
            continue
        if section == "matrix":
            rows.append((lineno, _numbers(line.split(), lineno)))
        elif section == "anchors":
            key, sep, rest = line.partition(":")
            if not sep:
                raise ParseError("anchor lines look like 'index: x y z'", lineno)
            try:
                idx = int(key)
            except ValueError:
                raise ParseError(f"bad anchor index {key.strip()!r}", lineno) from None
            if idx in anchors:
                raise ParseError(f"anchor {idx} listed twice", lineno)
            anchors[idx] = (lineno, _numbers(rest.split(), lineno))
        else:
            key, sep, value = line.partition(":")
            if not sep:
                raise ParseError(f"expected 'key: value', got {line!r}", lineno)
            header[key.strip()] = (lineno, value.strip())

    for key in ("units", "targets", "anchors", "matrix"):
        if key not in header:
            raise ParseError(f"missing {key!r}", last or None)
    units = header["units"][1]
    semantics = header.get("entry_semantics", (0, "squared"))[1]
    try:
        targets = int(header["targets"][1])
    except ValueError:
        raise ParseError("targets must be an integer", header["targets"][0]) from None

    if "arm_lengths" in header:
        lineno, value = header["arm_lengths"]
        arm = _numbers(value.split(), lineno)
    else:
        key = f"arm_length_{units}"
        if key not in header:
            raise ParseError(f"missing 'arm_lengths' or {key!r}", last or None)
        lineno, value = header[key]
        arm = _numbers([value], lineno) * targets

    if not anchors:
        raise ParseError("no anchors listed", header["anchors"])
    expected = list(range(targets + 1, targets + 1 + len(anchors)))
    if sorted(anchors) != expected:
        raise ParseError(f"anchor indices must be {expected[0]}..{expected[-1]}",
                         header["anchors"])
    coords = []
    for idx in expected:
        lineno, xyz = anchors[idx]
        if len(xyz) != 3:
            raise ParseError("anchors need three coordinates", lineno)
        coords.append(xyz)

    n = targets + len(anchors)
    if len(rows) != n:
        at = rows[-1][0] if rows else header["matrix"]
        raise ParseError(f"matrix needs {n} rows, found {len(rows)}", at)
    M = np.zeros((n, n))
    full = len(rows[0][1]) == n and n > 1
    for i, (lineno, values) in enumerate(rows):
        want = n if full else i + 1
        if len(values) != want:
            raise ParseError(f"row {i + 1} needs {want} entries, found {len(values)}", lineno)
        M[i, :want] = values
    if not full:
        M = np.tril(M) + np.tril(M, -1).T
    return MatrixDataset(units, semantics, targets, coords, arm, M)


def load_dataset(path):
    with open(path) as fh:
        return parse_dataset(fh.read())


def _num(v):
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def format_dataset(ds):
    """Text form of ``ds``; the matrix is written lower triangular."""
    lines = [f"units: {ds.units}", f"entry_semantics: {ds.semantics}", f"targets: {ds.targets}"]
    if np.all(ds.arm_lengths == ds.arm_lengths[0]):
        lines.append(f"arm_length_{ds.units}: {_num(ds.arm_lengths[0])}")
    else:
        lines.append("arm_lengths: " + " ".join(_num(v) for v in ds.arm_lengths))
    lines.append("anchors:")
    for k, a in enumerate(ds.anchors):
        lines.append(f"  {ds.targets + 1 + k}: " + " ".join(_num(v) for v in a))
    lines.append("matrix:")
    for i in range(ds.n):
        lines.append(" ".join(_num(v) for v in ds.entries[i, : i + 1]))
    return "\n".join(lines) + "\n"


def save_dataset(ds, path):
    with open(path, "w") as fh:
        fh.write(format_dataset(ds))


def fixture_path():
    """Location of the bundled pump fixture."""
    return resources.files("edmpose").joinpath("data", FIXTURE_NAME)


def _target_ranges(ds, G):
    p = ds.targets
    return np.sqrt(G[:p, p:])


def _scene_and_matrix(ds, semantics):
    G = ds.squared(semantics)
    R = _target_ranges(ds, G)
    priors = np.array([srls_localize(ds.anchors, R[i]) for i in range(ds.targets)])
    scene = ManipulatorScene(anchors=ds.anchors, priors=priors, arm_lengths=ds.arm_lengths,
                             units=ds.units)
    return scene, G


def load_semiphysical(path=None, semantics=None):
    """Scene and squared-distance matrix of a measured dataset.

    Reads the bundled pump fixture unless ``path`` is given.  ``semantics``
    overrides the file's ``entry_semantics`` flag.  The scene priors are
    per-target SR-LS fixes from the measured target-to-anchor ranges.
    """
    ds = load_dataset(fixture_path() if path is None else path)
    return _scene_and_matrix(ds, semantics)


def run_semiphysical(path=None, semantics=None, cfg=None, clamp_infeasible=True):
    """Run SR-LS, EPP1, EPP2 and CEPP2 on a measured dataset.

    EPP solves use every measured pair, with the anchor block replaced by
    the exact anchor distances.  CEPP2 fits its plane to the EPP2 joints.
    Returns one dict per method with per-segment arm-length errors, the
    RMS range residual over all targets and the wallclock seconds.
    """
    ds = load_dataset(fixture_path() if path is None else path)
    semantics = ds.semantics if semantics is None else semantics
    scene, G = _scene_and_matrix(ds, semantics)
    p = scene.p
    R = _target_ranges(ds, G)
    meas = RangeMeasurements.from_matrix(R)
    G_fit = G.copy()
    G_fit[p:, p:] = edm_from_points(scene.anchors)
    rows = []
    estimates = {}
    for method in SEMIPHYSICAL_METHODS:
        t0 = time.perf_counter()
        if method == "srls":
            joints = np.array([srls_localize(scene.anchors, R[i]) for i in range(p)])
            est = PoseEstimate(joints, scene.turntable.copy(), np.zeros(p), method="srls")
        elif method in ("epp1", "epp2"):
            est = epp_from_matrix(scene, G_fit, method == "epp2", cfg)
        else:
            seeded = ManipulatorScene(scene.anchors, estimates["epp2"].joints,
                                      scene.arm_lengths, scene.units)
            est = cepp_localize(seeded, meas, cfg, clamp_infeasible=clamp_infeasible)
        seconds = time.perf_counter() - t0
        est.range_residuals = _range_residuals(est.joints, scene, meas)
        estimates[method] = est
        rows.append({
            "method": method,
            "semantics": semantics,
            "arm_err": [float(v) for v in arm_length_errors(est, scene.arm_lengths)],
            "range_residual": float(np.sqrt(np.mean(est.range_residuals**2))),
            "seconds": seconds,
        })
    return rows


def semiphysical_csv(rows, timing=True):
    """CSV text for :func:`run_semiphysical` rows."""
    p = len(rows[0]["arm_err"]) if rows else 0
    header = ["method", "semantics"] + [f"arm_err_{j + 1}" for j in range(p)] + ["range_residual"]
    if timing:
        header.append("seconds")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in rows:
        line = [r["method"], r["semantics"]] + [format(v, ".10g") for v in r["arm_err"]]
        line.append(format(r["range_residual"], ".10g"))
        if timing:
            line.append(format(r["seconds"], ".6g"))
        writer.writerow(line)
    return buf.getvalue()
