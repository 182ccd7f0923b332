"""DP-SGD: per-example clipping plus Gaussian noise on the averaged gradient."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from dpaudit.data import Dataset
from dpaudit.models import (
    DEFAULT_HIDDEN,
    ModelParams,
    clipped_mean_gradient,
    init_params,
    per_example_gradients,
)
from dpaudit.numerics import RngStream, gaussian_vector

DIVERGENCE_LIMIT = 1e10


class TrainingDiverged(RuntimeError):
    """Parameters became non-finite or exceeded the divergence limit."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"training diverged at step {step}")


@dataclasses.dataclass(frozen=True)
class SgdConfig:
    """DP-SGD hyperparameters.

    Attributes:
      clip_norm: per-example L2 clipping bound C; ``math.inf`` disables clipping.
      noise_multiplier: sigma_GD. Noise std is ``clip_norm * noise_multiplier``
        on the summed clipped gradient, i.e. divided by the batch size once the
        sum is averaged (``noise_scaling="sum"``, the TF Privacy convention).
        ``noise_scaling="mean"`` adds the same std directly to the average.
      epochs: passes over the data; each has ``ceil(n / batch_size)`` steps.
      batch_size: examples per step (expected size under Poisson sampling).
      learning_rate: step size eta.
      init_scale: multiplier on the Glorot-normal std; 0 is fixed init.
      l2_reg: weight-decay coefficient, part of each per-example gradient
        before clipping.
      claimed_eps_th: the analytic epsilon this configuration is labelled
        with; ``math.inf`` for the noise-free row.
      delta: the delta that goes with ``claimed_eps_th``.
      sampling: ``"shuffle"`` (disjoint batches per epoch) or ``"poisson"``.
    """

    clip_norm: float = 1.0
    noise_multiplier: float = 0.0
    epochs: int = 24
    batch_size: int = 250
    learning_rate: float = 0.15
    init_scale: float = 0.0
    l2_reg: float = 0.0
    claimed_eps_th: float = math.inf
    delta: float = 1e-5
    sampling: str = "shuffle"
    noise_scaling: str = "sum"

    def __post_init__(self):
        if not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive (math.inf for unclipped)")
        if not self.noise_multiplier >= 0:
            raise ValueError("noise_multiplier must be non-negative")
        if self.noise_multiplier > 0 and math.isinf(self.clip_norm):
            raise ValueError("noise requires a finite clip_norm")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.init_scale >= 0 or not self.l2_reg >= 0:
            raise ValueError("init_scale and l2_reg must be non-negative")
        if not 0 <= self.delta < 1:
            raise ValueError("delta must lie in [0, 1)")
        if self.sampling not in ("shuffle", "poisson"):
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if self.noise_scaling not in ("sum", "mean"):
            raise ValueError(f"unknown noise_scaling {self.noise_scaling!r}")

    @property
    def private(self) -> bool:
        return self.noise_multiplier > 0

    def noise_std(self, batch_size: float) -> float:
        if self.noise_multiplier == 0:
            return 0.0
        std = self.clip_norm * self.noise_multiplier
        return std / batch_size if self.noise_scaling == "sum" else std


def clip(g, clip_norm: float) -> np.ndarray:
    """Scale ``g`` by ``min(1, C / ||g||)``."""
    if not clip_norm > 0:
        raise ValueError("clip_norm must be positive")
    g = np.asarray(g, dtype=np.float64)
    norm = np.linalg.norm(g)
    if norm <= clip_norm:
        return g.copy()
    return g * (clip_norm / norm)


def dp_sgd_train(data: Dataset, cfg: SgdConfig, arch: str, rng: RngStream,
                 hidden: int = DEFAULT_HIDDEN, check_clip: bool = False,
                 init: ModelParams | None = None) -> ModelParams:
    """Train with DP-SGD and return the final parameters.

    Draw order from ``rng``: initial weights, then per epoch a permutation
    (or per step a Poisson mask) followed by one noise vector per step. The
    result is a deterministic function of the inputs and the stream.

    Raises:
      TrainingDiverged: carrying the 1-based step index.
    """
    n = data.n
    if cfg.batch_size > n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds dataset size {n}")
    params = init if init is not None else init_params(
        arch, data.d, data.class_count, cfg.init_scale, rng, hidden)
    theta = params.flat.copy()
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    x, y = data.features, data.labels
    gen = rng.generator
    step = 0
    for _ in range(cfg.epochs):
        if cfg.sampling == "shuffle":
            order = gen.permutation(n)
            batches = [order[i:i + cfg.batch_size] for i in range(0, n, cfg.batch_size)]
        else:
            rate = cfg.batch_size / n
            batches = [np.flatnonzero(gen.random(n) < rate) for _ in range(steps_per_epoch)]
        for idx in batches:
            step += 1
            current = params.replace(theta)
            denom = len(idx) if cfg.sampling == "shuffle" else cfg.batch_size
            if len(idx):
                grad, _ = clipped_mean_gradient(current, x[idx], y[idx], cfg.l2_reg,
                                                    cfg.clip_norm, denominator=denom)
                if check_clip:
                    _assert_clipped(current, x[idx], y[idx], cfg, denom, grad)
            else:
                grad = np.zeros_like(theta)
            noise = gaussian_vector(rng, theta.size, cfg.noise_std(denom))
            theta = theta - cfg.learning_rate * (grad + noise)
            if not np.all(np.isfinite(theta)) or np.max(np.abs(theta)) > DIVERGENCE_LIMIT:
                raise TrainingDiverged(step)
    return params.replace(theta)


def _assert_clipped(params, x, y, cfg, denom, grad):
    """Slow-path check: every clipped row obeys the bound and sums to ``grad``."""
    rows = per_example_gradients(params, x, y, cfg.l2_reg)
    if not math.isinf(cfg.clip_norm):
        rows = np.stack([clip(g, cfg.clip_norm) for g in rows])
        assert np.all(np.linalg.norm(rows, axis=1) <= cfg.clip_norm * (1 + 1e-12))
    expected = rows.sum(axis=0) / denom
    assert np.allclose(grad, expected, rtol=1e-9, atol=1e-12)
