"""Monte-Carlo experiments comparing the posture methods."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from ..baselines import AngleReading, srls_localize, tpsm_localize
from ..errors import EdmPoseError, ValidationError
from ..nedm_solver import SolverConfig
from ..posture import PoseEstimate, arm_length_errors, cepp_localize, epp_localize
from .noise import NoiseModel, apply_noise
from .scenes import DEFAULT_ANCHORS, BOOM_ARM_LENGTHS, POSE_MODES, gen_pose, true_ranges

logger = logging.getLogger(__name__)

METHODS = ("epp1", "epp2", "cepp2", "srls", "tpsm")
THREADS_ENV = "EDMPOSE_THREADS"


def rmse(est, truth):
    """``(1/sqrt(p)) * sqrt(sum_i ||est_i - truth_i||^2)``."""
    est = np.atleast_2d(np.asarray(est, dtype=float))
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    if est.shape != truth.shape:
        raise ValidationError("estimate and truth differ in shape")
    return float(np.sqrt(np.sum((est - truth) ** 2)) / math.sqrt(est.shape[0]))


@dataclass
class ExperimentConfig:
    """Scene template, methods, noise sweep and run protocol.

    ``noise_values`` are the swept ``eta`` (multiplicative) or ``sigma``
    (additive, nlos) values.  ``tpsm_pitch_std_deg`` is the per-joint
    inclinometer error and ``tpsm_azimuth_err_deg`` the half-width of the
    uniform turntable-angle error used by the TPSM baseline.
    """

    arm_lengths: tuple = BOOM_ARM_LENGTHS
    anchors: tuple = DEFAULT_ANCHORS
    units: str = "m"
    pose_mode: str = "planar-random"
    prior_radius: float = 0.0
    methods: tuple = ("epp1", "epp2", "srls")
    noise_kind: str = "multiplicative"
    noise_values: tuple = (0.1,)
    nlos_gamma: float = 2.0
    nlos_fraction: float = 0.3
    runs: int = 100
    seed: int = 0
    clamp_projection: bool = True
    tpsm_pitch_std_deg: float = 1.0
    tpsm_azimuth_err_deg: float = 0.5
    output: str | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        self.arm_lengths = tuple(float(v) for v in self.arm_lengths)
        self.anchors = tuple(tuple(float(c) for c in a) for a in self.anchors)
        self.methods = tuple(str(m).lower() for m in self.methods)
        self.noise_values = tuple(float(v) for v in self.noise_values)
        if self.runs < 1:
            raise ValidationError("runs must be at least 1")
        if not self.methods:
            raise ValidationError("at least one method is required")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValidationError(f"unknown methods: {sorted(unknown)}")
        if self.pose_mode != "planar-random":
            raise ValidationError(f"experiments need a random pose mode, not {self.pose_mode!r}")
        if not self.noise_values:
            raise ValidationError("noise sweep is empty")
        for v in self.noise_values:
            self.noise_model(v)
        if len(self.anchors) < 4 or any(len(a) != 3 for a in self.anchors):
            raise ValidationError("experiments need at least four 3D anchors")
        if self.prior_radius < 0:
            raise ValidationError("prior_radius must be non-negative")

    def noise_model(self, value, seed=0):
        if self.noise_kind == "multiplicative":
            return NoiseModel("multiplicative", eta=value, seed=seed)
        return NoiseModel(self.noise_kind, sigma=value, gamma=self.nlos_gamma,
                          nlos_fraction=self.nlos_fraction, seed=seed)

    @property
    def p(self):
        return len(self.arm_lengths)


def _config_from_mapping(data):
    data = dict(data or {})
    scene = dict(data.pop("scene", {}) or {})
    noise = dict(data.pop("noise", {}) or {})
    tpsm = dict(data.pop("tpsm", {}) or {})
    solver = dict(data.pop("solver", {}) or {})
    kwargs = {}
    for key in ("arm_lengths", "anchors", "units", "prior_radius"):
        if key in scene:
            kwargs[key] = scene.pop(key)
    if "pose" in scene:
        kwargs["pose_mode"] = scene.pop("pose")
    if scene:
        raise ValidationError(f"unknown scene keys: {sorted(scene)}")
    mapping = {"kind": "noise_kind", "values": "noise_values", "gamma": "nlos_gamma",
               "fraction": "nlos_fraction"}
    for key, value in noise.items():
        if key not in mapping:
            raise ValidationError(f"unknown noise key {key!r}")
        kwargs[mapping[key]] = value
    for key, value in tpsm.items():
        if key not in ("pitch_std_deg", "azimuth_err_deg"):
            raise ValidationError(f"unknown tpsm key {key!r}")
        kwargs["tpsm_" + key] = value
    known = {"methods", "runs", "seed", "output", "clamp_projection"}
    for key in list(data):
        if key not in known:
            raise ValidationError(f"unknown config key {key!r}")
        kwargs[key] = data.pop(key)
    try:
        kwargs["solver"] = SolverConfig(**solver)
    except TypeError as exc:
        raise ValidationError(f"bad solver section: {exc}") from None
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc)) from None


def load_config(path):
    """Read an :class:`ExperimentConfig` from a YAML document."""
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ValidationError(f"{path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ValidationError(f"{path}: top level must be a mapping")
    return _config_from_mapping(data)


def run_method(method, pose, meas, cfg, rng_tpsm):
    """Run one method on one noisy instance; returns a :class:`PoseEstimate`."""
    scene = pose.scene
    if method in ("epp1", "epp2"):
        return epp_localize(scene, meas, use_arm_constraints=(method == "epp2"), cfg=cfg.solver)
    if method == "cepp2":
        return cepp_localize(scene, meas, cfg=cfg.solver, clamp_infeasible=cfg.clamp_projection)
    if method == "srls":
        R = meas.matrix(scene.p, scene.n)
        joints = np.array([srls_localize(scene.anchors, R[i]) for i in range(scene.p)])
        return PoseEstimate(joints, scene.turntable.copy(), np.zeros(scene.p), method="srls")
    if method == "tpsm":
        az_err = math.radians(cfg.tpsm_azimuth_err_deg)
        noisy = AngleReading(
            pose.angles.joint_angles
            + rng_tpsm.standard_normal(scene.p) * math.radians(cfg.tpsm_pitch_std_deg),
            pose.angles.turntable_azimuth + rng_tpsm.uniform(-az_err, az_err))
        joints = tpsm_localize(scene.arm_lengths, noisy, scene.turntable)
        return PoseEstimate(joints, scene.turntable.copy(), np.zeros(scene.p), method="tpsm")
    raise ValidationError(f"unknown method {method!r}")


@dataclass
class CellStats:
    """Per-run samples for one (method, noise value) cell of a report."""

    rmse: list = field(default_factory=list)
    arm_err: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    failures: int = 0
    resamples: int = 0

    def merge(self, other):
        return CellStats(self.rmse + other.rmse, self.arm_err + other.arm_err,
                         self.seconds + other.seconds, self.failures + other.failures,
                         self.resamples + other.resamples)

    @property
    def attempts(self):
        return len(self.rmse) + self.failures


@dataclass
class MetricsReport:
    """Aggregated results; cells are keyed by ``(method, noise value)``."""

    methods: tuple
    noise_kind: str
    noise_values: tuple
    p: int
    seed: int
    cells: dict = field(default_factory=dict)

    def cell(self, method, value):
        return self.cells.setdefault((method, float(value)), CellStats())

    def merge(self, other):
        """Combine two reports over disjoint run ranges (run order preserved)."""
        if (self.methods, self.noise_kind, self.noise_values, self.p, self.seed) != (
                other.methods, other.noise_kind, other.noise_values, other.p, other.seed):
            raise ValidationError("reports describe different experiments")
        merged = replace(self, cells={})
        for key in set(self.cells) | set(other.cells):
            a = self.cells.get(key, CellStats())
            b = other.cells.get(key, CellStats())
            merged.cells[key] = a.merge(b)
        return merged

    def rows(self):
        """One summary dict per (method, noise value), in request order."""
        out = []
        for value in self.noise_values:
            for method in self.methods:
                c = self.cells.get((method, float(value)), CellStats())
                ok = len(c.rmse)
                arm = np.mean(c.arm_err, axis=0) if ok else np.full(self.p, np.nan)
                out.append({
                    "method": method,
                    "noise_param": float(value),
                    "mean_rmse": float(np.mean(c.rmse)) if ok else math.nan,
                    "median_rmse": float(np.median(c.rmse)) if ok else math.nan,
                    "mean_arm_err": [float(v) for v in arm],
                    "mean_seconds": float(np.mean(c.seconds)) if ok else math.nan,
                    "runs": c.attempts,
                    "failures": c.failures,
                    "failure_rate": c.failures / c.attempts if c.attempts else 0.0,
                    "resamples": c.resamples,
                    "seed": self.seed,
                })
        return out

    def row(self, method, value):
        for r in self.rows():
            if r["method"] == method and r["noise_param"] == float(value):
                return r
        raise KeyError((method, value))

    def to_csv(self, timing=True, extended=False):
        """CSV text.  ``timing=False`` drops the wallclock column, which is
        the only field that differs between repeated runs."""
        arm_cols = [f"mean_arm_err_{j + 1}" for j in range(self.p)]
        header = ["method", "noise_param", "mean_rmse"]
        if extended:
            header.append("median_rmse")
        header += arm_cols
        if timing:
            header.append("mean_seconds")
        header += ["runs", "seed"]
        if extended:
            header += ["failures", "resamples"]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for r in self.rows():
            line = [r["method"], _fmt(r["noise_param"]), _fmt(r["mean_rmse"])]
            if extended:
                line.append(_fmt(r["median_rmse"]))
            line += [_fmt(v) for v in r["mean_arm_err"]]
            if timing:
                line.append(_fmt(r["mean_seconds"]))
            line += [r["runs"], r["seed"]]
            if extended:
                line += [r["failures"], r["resamples"]]
            writer.writerow(line)
        return buf.getvalue()


def _fmt(x):
    return "nan" if isinstance(x, float) and math.isnan(x) else format(x, ".10g")


def run_seeds(seed, index):
    """Independent generators for the pose, range noise and angle noise of one run."""
    ss = np.random.SeedSequence([int(seed), int(index)])
    pose_ss, noise_ss, angle_ss = ss.spawn(3)
    return (np.random.default_rng(pose_ss), np.random.default_rng(noise_ss),
            np.random.default_rng(angle_ss))


def run_range(cfg, start, stop):
    """Run ``cfg`` for run indices ``start..stop-1``; returns a partial report."""
    report = MetricsReport(cfg.methods, cfg.noise_kind, cfg.noise_values, cfg.p, cfg.seed)
    for index in range(start, stop):
        pose_rng, _, _ = run_seeds(cfg.seed, index)
        pose = gen_pose(cfg.arm_lengths, cfg.pose_mode, pose_rng, anchors=cfg.anchors,
                        prior_radius=cfg.prior_radius, units=cfg.units)
        d = true_ranges(pose.joints, pose.scene.anchors)
        for value in cfg.noise_values:
            # same noise stream at every sweep value: common random numbers
            _, noise_rng, angle_rng = run_seeds(cfg.seed, index)
            meas = apply_noise(d, cfg.noise_model(value), noise_rng)
            for method in cfg.methods:
                cell = report.cell(method, value)
                cell.resamples += meas.resamples
                t0 = time.perf_counter()
                try:
                    est = run_method(method, pose, meas, cfg, angle_rng)
                except EdmPoseError as exc:
                    logger.debug("run %d %s failed: %s", index, method, exc)
                    cell.failures += 1
                    continue
                cell.seconds.append(time.perf_counter() - t0)
                cell.rmse.append(rmse(est.joints, pose.joints))
                cell.arm_err.append(arm_length_errors(est, cfg.arm_lengths))
    return report


def default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _run_chunk(args):
    cfg, start, stop = args
    return run_range(cfg, start, stop)


def run_experiment(cfg, threads=None):
    """Run every configured run and aggregate; writes ``cfg.output`` if set.

    Runs are split into contiguous chunks across ``threads`` worker
    processes and merged in run order, so the report does not depend on the
    worker count.
    """
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or cfg.runs == 1:
        report = run_range(cfg, 0, cfg.runs)
    else:
        bounds = np.linspace(0, cfg.runs, min(threads, cfg.runs) + 1).astype(int)
        chunks = [(cfg, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(_run_chunk, chunks))
        report = parts[0]
        for part in parts[1:]:
            report = report.merge(part)
    if cfg.output:
        with open(cfg.output, "w") as fh:
            fh.write(report.to_csv(timing=False, extended=True))
    return report
