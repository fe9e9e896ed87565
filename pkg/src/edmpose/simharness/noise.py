"""Range noise models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..posture import RangeMeasurements

KINDS = ("multiplicative", "additive", "nlos")


@dataclass(frozen=True)
class NoiseModel:
    """One of three range-error models.

    ``multiplicative``: ``d (1 + z eta)``; ``additive``: ``d + z sigma``;
    ``nlos``: additive plus an exponential bias with mean ``gamma`` on a
    random ``nlos_fraction`` of the pairs.
    """

    kind: str = "multiplicative"
    eta: float = 0.0
    sigma: float = 0.0
    gamma: float = 2.0
    nlos_fraction: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValidationError("eta must lie in [0, 1]")
        if self.sigma < 0:
            raise ValidationError("sigma must be non-negative")
        if self.gamma <= 0:
            raise ValidationError("gamma must be positive")
        if not 0.0 <= self.nlos_fraction <= 1.0:
            raise ValidationError("nlos_fraction must lie in [0, 1]")

    @property
    def parameter(self):
        """The swept quantity: ``eta`` or ``sigma``."""
        return self.eta if self.kind == "multiplicative" else self.sigma


def _perturb(d, model, rng):
    if model.kind == "multiplicative":
        return d * (1.0 + rng.standard_normal(d.shape) * model.eta)
    return d + rng.standard_normal(d.shape) * model.sigma


def apply_noise(true_distances, model, rng=None, max_resamples=1000):
    """Noisy copy of a ``(p, m)`` array of target-to-anchor distances.

    Negative draws are redrawn; the number of redraws is stored on the
    returned measurements as ``resamples``.
    """
    rng = np.random.default_rng(model.seed) if rng is None else rng
    d = np.asarray(true_distances, dtype=float)
    delta = _perturb(d, model, rng)
    resamples = 0
    bad = delta < 0
    while bad.any():
        if resamples > max_resamples * d.size:
            raise ValidationError("noise model keeps producing negative ranges")
        resamples += int(bad.sum())
        delta[bad] = _perturb(d[bad], model, rng)
        bad = delta < 0
    if model.kind == "nlos":
        k = int(round(model.nlos_fraction * d.size))
        picked = rng.choice(d.size, size=k, replace=False)
        bias = rng.exponential(model.gamma, size=k)
        flat = delta.reshape(-1)
        flat[picked] += bias
    return RangeMeasurements.from_matrix(delta, resamples)
