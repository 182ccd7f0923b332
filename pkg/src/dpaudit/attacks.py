"""Poisoned dataset pairs and the test statistics that distinguish them.

Every generator returns a :class:`PoisonPlan` holding the clean dataset
``d0`` and the poisoned ``d1``, which differ on exactly ``k`` rows. The plan
is built once per audit so the pair stays fixed across Monte-Carlo trials.
"""

from __future__ import annotations

import dataclasses
import enum
import math
import warnings
from typing import Protocol

import numpy as np

from dpaudit.data import Dataset
from dpaudit.models import ModelParams, logits, loss, predict
from dpaudit.numerics import RngStream, svd


class Verdict(enum.Enum):
    BACKDOORED = "Backdoored"
    NOT_BACKDOORED = "NotBackdoored"


@dataclasses.dataclass(frozen=True)
class PatchPerturbation:
    """Square patch stamped onto flattened images.

    The default is a 5x5 block at maximum intensity in the top-left corner of
    a 28x28 single-channel image.
    """

    image_shape: tuple[int, ...] = (28, 28)
    row: int = 0
    col: int = 0
    size: int = 5
    intensity: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "image_shape", tuple(int(s) for s in self.image_shape))
        if len(self.image_shape) not in (2, 3):
            raise ValueError("image_shape must be (H, W) or (H, W, C)")
        h, w = self.image_shape[:2]
        if self.size < 1 or self.row < 0 or self.col < 0:
            raise ValueError("patch position and size must be non-negative, size >= 1")
        if self.row + self.size > h or self.col + self.size > w:
            raise ValueError(f"patch at ({self.row}, {self.col}) of size {self.size} exceeds image {h}x{w}")

    @property
    def dim(self) -> int:
        return int(np.prod(self.image_shape))

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        flat_input = x.ndim == 1
        rows = np.atleast_2d(x)
        if rows.shape[1] != self.dim:
            raise ValueError(f"rows have {rows.shape[1]} features, patch expects images of {self.dim}")
        imgs = rows.reshape((rows.shape[0],) + self.image_shape).copy()
        imgs[:, self.row:self.row + self.size, self.col:self.col + self.size] = self.intensity
        out = imgs.reshape(rows.shape[0], -1)
        return out[0] if flat_input else out

    def to_dict(self) -> dict:
        return dataclasses.asdict(self) | {"image_shape": list(self.image_shape)}

    @classmethod
    def from_dict(cls, d: dict) -> "PatchPerturbation":
        return cls(**d)


class FeatureMap(Protocol):
    """A frozen encoder applied before the trainable model."""

    output_dim: int

    def __call__(self, x) -> np.ndarray: ...

    def vjp(self, x, g) -> np.ndarray:
        """Vector-Jacobian product ``J(x)^T g`` for a single input ``x``."""
        ...


class IdentityFeatureMap:
    def __init__(self, dim: int):
        self.output_dim = dim

    def __call__(self, x):
        return np.asarray(x, dtype=np.float64)

    def vjp(self, x, g):
        return np.asarray(g, dtype=np.float64)


class ReluFeatureMap:
    """``relu(x @ weights + bias)``; typically the hidden layer of a trained network."""

    def __init__(self, weights, bias):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.output_dim = self.weights.shape[1]

    @classmethod
    def from_params(cls, params: ModelParams) -> "ReluFeatureMap":
        if params.arch != "fnn":
            raise ValueError("only a two-layer network has a hidden layer to reuse")
        w, b = params.layers()[0]
        return cls(w.copy(), b.copy())

    def __call__(self, x):
        return np.maximum(np.asarray(x, dtype=np.float64) @ self.weights + self.bias, 0.0)

    def vjp(self, x, g):
        pre = np.asarray(x, dtype=np.float64) @ self.weights + self.bias
        return (np.asarray(g) * (pre > 0)) @ self.weights.T


@dataclasses.dataclass(frozen=True, eq=False)
class PoisonPlan:
    d0: Dataset
    d1: Dataset
    k: int
    poison_rows: np.ndarray
    poison_labels: np.ndarray
    replaced: np.ndarray
    attack: str
    y_p: int
    x_p: np.ndarray | None = None
    pert: PatchPerturbation | None = None
    feature_map: FeatureMap | None = None
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.d0.features.shape != self.d1.features.shape:
            raise ValueError("d0 and d1 must have identical shape")

    def training_sets(self) -> tuple[Dataset, Dataset]:
        """The datasets the trainer sees (encoded when a feature map is attached)."""
        if self.feature_map is None:
            return self.d0, self.d1
        fm = self.feature_map
        return self.d0.with_features(fm(self.d0.features)), self.d1.with_features(fm(self.d1.features))


@dataclasses.dataclass(frozen=True, eq=False)
class BackdoorStatistic:
    """Summed loss of perturbed test rows toward the target class."""

    test_features: np.ndarray
    pert: PatchPerturbation
    target: int
    threshold: float | None = None
    attack: str = "backdoor"

    def __post_init__(self):
        object.__setattr__(self, "_perturbed", self.pert.apply(self.test_features))

    def score(self, params: ModelParams) -> float:
        labels = np.full(self._perturbed.shape[0], self.target)
        return float(np.sum(loss(params, self._perturbed, labels)))

    def evaluate(self, params: ModelParams) -> Verdict:
        return _verdict(self.score(params), self.threshold)

    def with_threshold(self, z: float) -> "BackdoorStatistic":
        return dataclasses.replace(self, threshold=z)


@dataclasses.dataclass(frozen=True, eq=False)
class ClipBkdStatistic:
    """``(f(x_p) - f(0)) . y_p``, optionally through a frozen feature map.

    Binary models use the signed scalar logit difference (sign +1 for class
    1, -1 for class 0); multiclass models take the difference's ``y_p``
    coordinate (inner product with the one-hot target).
    """

    x_p: np.ndarray
    y_p: int
    threshold: float | None = None
    feature_map: FeatureMap | None = None
    attack: str = "clipbkd"

    def score(self, params: ModelParams) -> float:
        pts = np.stack([self.x_p, np.zeros_like(self.x_p)])
        if self.feature_map is not None:
            pts = self.feature_map(pts)
        z = logits(params, pts)
        diff = z[0] - z[1]
        if params.class_count == 2:
            return float(diff[0] * (1.0 if self.y_p == 1 else -1.0))
        return float(diff[self.y_p])

    def evaluate(self, params: ModelParams) -> Verdict:
        return _verdict(self.score(params), self.threshold)

    def with_threshold(self, z: float) -> "ClipBkdStatistic":
        return dataclasses.replace(self, threshold=z)


TestStatistic = BackdoorStatistic | ClipBkdStatistic


def _verdict(score: float, threshold: float | None) -> Verdict:
    if threshold is None:
        raise ValueError("statistic has no threshold; calibrate it first")
    return Verdict.BACKDOORED if score > threshold else Verdict.NOT_BACKDOORED


def _replace_random_rows(data: Dataset, rows, labels, k: int, rng: RngStream) -> tuple[Dataset, np.ndarray]:
    if k == 0:
        return data, np.zeros(0, dtype=np.int64)
    dst = np.sort(rng.generator.choice(data.n, size=k, replace=False))
    return data.replace_rows(dst, rows, labels), dst


def _check_k(k: int, data: Dataset):
    if not 0 <= k <= data.n:
        raise ValueError(f"k must lie in [0, {data.n}], got {k}")


def backdoor_generate(data: Dataset, k: int, pert: PatchPerturbation, y_p: int,
                      rng: RngStream) -> PoisonPlan:
    """Patch ``k`` random rows, relabel them ``y_p`` and overwrite ``k`` random rows."""
    _check_k(k, data)
    if not 0 <= y_p < data.class_count:
        raise ValueError("target class out of range")
    if data.d != pert.dim:
        raise ValueError(f"data has {data.d} features but the patch expects {pert.dim}")
    src = np.sort(rng.generator.choice(data.n, size=k, replace=False))
    rows = pert.apply(data.features[src]) if k else np.zeros((0, data.d))
    labels = np.full(k, y_p, dtype=np.int64)
    d1, dst = _replace_random_rows(data, rows, labels, k, rng)
    return PoisonPlan(data, d1, k, rows, labels, dst, "backdoor", y_p, pert=pert)


def backdoor_test(params: ModelParams, test_data, pert: PatchPerturbation, y_p: int, z: float) -> Verdict:
    features = test_data.features if isinstance(test_data, Dataset) else test_data
    return BackdoorStatistic(features, pert, y_p, threshold=z).evaluate(params)


def mean_row_norm(x) -> float:
    return float(np.mean(np.linalg.norm(np.asarray(x), axis=1)))


def least_variance_direction(x) -> np.ndarray:
    """Right singular vector of ``x`` for its smallest singular value."""
    res = svd(x)
    if res.singular_values[0] == 0:
        raise ValueError("data matrix has rank 0; no poisoning direction exists")
    return res.smallest_vector


def target_class(reference_model: ModelParams, h) -> int:
    """The class the reference model scores lowest at ``h``."""
    return int(np.argmin(predict(reference_model, np.atleast_2d(h))[0]))


def clipbkd_generate(data: Dataset, k: int, reference_model: ModelParams, norm: float | None = None,
                     rng: RngStream | None = None) -> PoisonPlan:
    """Insert ``k`` copies of ``norm * v_d`` labelled with the least-likely class.

    ``v_d`` is the right singular vector of the raw feature matrix for its
    smallest singular value. ``norm`` defaults to the mean row norm.
    """
    _check_k(k, data)
    if data.d < 2:
        raise ValueError("ClipBKD needs at least two features")
    m = mean_row_norm(data.features) if norm is None else float(norm)
    if not m > 0:
        raise ValueError("poison norm must be positive")
    x_p = m * least_variance_direction(data.features)
    y_p = target_class(reference_model, x_p)
    rows = np.tile(x_p, (k, 1))
    labels = np.full(k, y_p, dtype=np.int64)
    if k and rng is None:
        raise ValueError("an RngStream is needed to choose replaced rows")
    d1, dst = _replace_random_rows(data, rows, labels, k, rng)
    return PoisonPlan(data, d1, k, rows, labels, dst, "clipbkd", y_p, x_p=x_p)


def clipbkd_test(params: ModelParams, x_p, y_p: int, z: float, feature_map: FeatureMap | None = None) -> Verdict:
    return ClipBkdStatistic(np.asarray(x_p, dtype=np.float64), y_p, z, feature_map).evaluate(params)


def default_subspace_size(feature_dim: int) -> int:
    return max(1, min(10, feature_dim // 4))


@dataclasses.dataclass
class AscentTrace:
    x: np.ndarray
    objective: list[float]
    converged: bool


def feature_space_ascent(feature_map: FeatureMap, v_low: np.ndarray, v_high: np.ndarray,
                         x0: np.ndarray, iterations: int = 10000, step: float = 1.0,
                         tol: float = 1e-6, callback=None) -> AscentTrace:
    """Projected gradient ascent of ``|V_low^T h|^2 - |V_high^T h|^2`` over ``[0, 1]^d``.

    ``h = feature_map(x)``; every iterate is clamped to the unit box.
    ``converged`` is False when the last step still improved the objective
    by more than ``tol``.
    """
    def objective(h):
        return float(np.sum((h @ v_low) ** 2) - np.sum((h @ v_high) ** 2))

    x = np.clip(np.asarray(x0, dtype=np.float64), 0.0, 1.0)
    h = feature_map(x)
    trace = [objective(h)]
    improvement = math.inf
    for _ in range(iterations):
        grad_h = 2.0 * (v_low @ (v_low.T @ h) - v_high @ (v_high.T @ h))
        x = np.clip(x + step * feature_map.vjp(x, grad_h), 0.0, 1.0)
        if callback is not None:
            callback(x)
        h = feature_map(x)
        trace.append(objective(h))
        improvement = trace[-1] - trace[-2]
    return AscentTrace(x, trace, converged=not improvement > tol)


def _better(a: AscentTrace, b: AscentTrace, tol: float = 1e-9) -> bool:
    fa, fb = a.objective[-1], b.objective[-1]
    if abs(fa - fb) > tol * max(1.0, abs(fb)):
        return fa > fb
    return np.linalg.norm(a.x) < np.linalg.norm(b.x)


def feature_clipbkd_generate(feature_map: FeatureMap, data: Dataset, k: int, reference_model: ModelParams,
                             rng: RngStream, q_low: int | None = None, q_high: int | None = None,
                             iterations: int = 10000, step: float = 1.0, restarts: int = 4) -> PoisonPlan:
    """ClipBKD through a frozen encoder.

    The right singular vectors of the encoded data ``feature_map(X)`` give
    the bottom ``q_low`` (least variance) and top ``q_high`` directions; an
    input in ``[0, 1]^d`` is found by projected gradient ascent that loads
    the first set and avoids the second.

    The origin is a stationary point for linear encoders and the box
    projection can pull an ascent back onto it, so ``restarts`` ascents are
    run: one from a small random point near the origin, the rest from
    uniform points in the box. The best objective wins; near-ties go to the
    smaller input, since coordinates the objective ignores keep whatever
    value they started with. ``reference_model`` operates on encoded
    features and picks ``y_p``.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    _check_k(k, data)
    h = feature_map(data.features)
    p = h.shape[1]
    q_low = default_subspace_size(p) if q_low is None else q_low
    q_high = default_subspace_size(p) if q_high is None else q_high
    if q_low < 1 or q_low + q_high > p:
        raise ValueError(f"need 1 <= q_low and q_low + q_high <= {p}")
    res = svd(h)
    if res.singular_values[0] == 0:
        raise ValueError("encoded data has rank 0")
    v_low = res.v[:, p - q_low:]
    v_high = res.v[:, :q_high]
    gen = rng.generator
    starts = [gen.uniform(0.0, 1e-3, size=data.d)] + [gen.uniform(0.0, 1.0, size=data.d)
                                                      for _ in range(restarts - 1)]
    trace = None
    for x0 in starts:
        cand = feature_space_ascent(feature_map, v_low, v_high, x0, iterations, step)
        if trace is None or _better(cand, trace):
            trace = cand
    notes = ()
    if not trace.converged:
        msg = f"feature-space ascent still improving after {iterations} iterations"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes = (msg,)
    x_p = trace.x
    y_p = target_class(reference_model, feature_map(x_p[None, :])[0])
    rows = np.tile(x_p, (k, 1))
    labels = np.full(k, y_p, dtype=np.int64)
    d1, dst = _replace_random_rows(data, rows, labels, k, rng)
    return PoisonPlan(data, d1, k, rows, labels, dst, "feature-clipbkd", y_p, x_p=x_p,
                      feature_map=feature_map, notes=notes)


def plan_statistic(plan: PoisonPlan, test_features=None) -> TestStatistic:
    """The uncalibrated statistic that goes with ``plan``.

    Backdoor plans need ``test_features``, the rows that get the patch.
    """
    if plan.attack == "backdoor":
        if test_features is None:
            raise ValueError("the backdoor statistic needs test features")
        return BackdoorStatistic(np.asarray(test_features, dtype=np.float64), plan.pert, plan.y_p)
    return ClipBkdStatistic(np.asarray(plan.x_p), plan.y_p, feature_map=plan.feature_map)
