"""Simulation harness: scenes, noise, Monte-Carlo experiments and the CLI."""

from .experiment import ExperimentConfig, MetricsReport, load_config, rmse, run_experiment
from .noise import NoiseModel, apply_noise
from .scenes import DEFAULT_ANCHORS, BOOM_ARM_LENGTHS, gen_pose, true_ranges
from .fixtures import MatrixDataset, load_dataset, load_semiphysical, run_semiphysical, save_dataset
from .scenefile import load_scene
