"""Logistic regression and a one-hidden-layer ReLU network.

Parameters live in a single flat vector. The flattening order is layer by
layer, weight matrix first (row-major, shape ``(fan_in, fan_out)``) then the
bias vector: ``[W, b]`` for logistic regression and ``[W1, b1, W2, b2]`` for
the network. Binary problems use a single output logit with the sigmoid
loss; problems with more classes use softmax cross-entropy.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.special import expit, logsumexp, softmax

from dpaudit.numerics import RngStream, glorot_init

ARCHITECTURES = ("logistic", "fnn")
DEFAULT_HIDDEN = 32


@dataclasses.dataclass(frozen=True, eq=False)
class ModelParams:
    arch: str
    input_dim: int
    class_count: int
    flat: np.ndarray
    hidden: int = DEFAULT_HIDDEN

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}")
        flat = np.asarray(self.flat, dtype=np.float64)
        if flat.shape != (self.size,):
            raise ValueError(f"expected {self.size} parameters, got shape {flat.shape}")
        object.__setattr__(self, "flat", flat)

    @property
    def output_dim(self) -> int:
        return 1 if self.class_count == 2 else self.class_count

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        if self.arch == "logistic":
            return [(self.input_dim, self.output_dim)]
        return [(self.input_dim, self.hidden), (self.hidden, self.output_dim)]

    @property
    def size(self) -> int:
        return sum(i * o + o for i, o in self.layer_shapes)

    def layers(self, flat=None) -> list[tuple[np.ndarray, np.ndarray]]:
        """``(W, b)`` views into ``flat`` (defaults to this model's vector)."""
        flat = self.flat if flat is None else flat
        out, pos = [], 0
        for i, o in self.layer_shapes:
            w = flat[pos:pos + i * o].reshape(i, o)
            pos += i * o
            b = flat[pos:pos + o]
            pos += o
            out.append((w, b))
        return out

    def weight_mask(self) -> np.ndarray:
        """1 on weight-matrix entries, 0 on biases (the l2 penalty's support)."""
        mask = np.zeros(self.size)
        pos = 0
        for i, o in self.layer_shapes:
            mask[pos:pos + i * o] = 1.0
            pos += i * o + o
        return mask

    def replace(self, flat) -> "ModelParams":
        return dataclasses.replace(self, flat=np.asarray(flat, dtype=np.float64))


def init_params(arch: str, input_dim: int, class_count: int, init_scale: float,
                rng: RngStream | None = None, hidden: int = DEFAULT_HIDDEN) -> ModelParams:
    """Glorot-normal weights scaled by ``init_scale``; zero biases."""
    shell = ModelParams(arch, input_dim, class_count, _zeros(arch, input_dim, class_count, hidden), hidden)
    if init_scale == 0:
        return shell
    if rng is None:
        raise ValueError("random initialization needs an RngStream")
    flat = np.zeros(shell.size)
    for (w, _), (i, o) in zip(shell.layers(flat), shell.layer_shapes):
        w[...] = glorot_init(rng, i, o, init_scale)
    return shell.replace(flat)


def _zeros(arch, input_dim, class_count, hidden):
    out = 1 if class_count == 2 else class_count
    if arch == "fnn":
        return np.zeros(input_dim * hidden + hidden + hidden * out + out)
    return np.zeros(input_dim * out + out)


def _check_inputs(params: ModelParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != params.input_dim:
        raise ValueError(f"feature dimension {x.shape[1]} does not match model input {params.input_dim}")
    return x


def _forward(params: ModelParams, x: np.ndarray):
    """Return logits and the per-layer (input, pre-activation) cache."""
    cache = []
    a = x
    layers = params.layers()
    for depth, (w, b) in enumerate(layers):
        z = a @ w + b
        cache.append((a, z))
        a = np.maximum(z, 0.0) if depth < len(layers) - 1 else z
    return a, cache


def logits(params: ModelParams, x) -> np.ndarray:
    """Raw network output, shape ``(n, output_dim)``."""
    return _forward(params, _check_inputs(params, x))[0]


def predict(params: ModelParams, x) -> np.ndarray:
    """Class scores as pre-softmax logits, shape ``(n, class_count)``.

    For binary models the scores are ``[0, z]`` where ``z`` is the single
    output logit, which has the same softmax as the sigmoid model.
    """
    z = logits(params, x)
    if params.class_count == 2:
        return np.concatenate([np.zeros_like(z), z], axis=1)
    return z


def loss(params: ModelParams, x, y) -> np.ndarray:
    """Per-example cross-entropy (no regularization term)."""
    z = logits(params, x)
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if params.class_count == 2:
        z = z[:, 0]
        return np.logaddexp(0.0, z) - y * z
    return logsumexp(z, axis=1) - z[np.arange(len(y)), y]


def accuracy(params: ModelParams, x, y) -> float:
    return float(np.mean(np.argmax(predict(params, x), axis=1) == np.asarray(y)))


def _output_delta(params: ModelParams, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    if params.class_count == 2:
        return expit(z) - y[:, None]
    p = softmax(z, axis=1)
    p[np.arange(len(y)), y] -= 1.0
    return p


def _backprop(params: ModelParams, x, y):
    """Per-layer ``(layer input, output delta)`` pairs for every example."""
    x = _check_inputs(params, x)
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if y.shape[0] != x.shape[0]:
        raise ValueError("features and labels disagree on the number of examples")
    z, cache = _forward(params, x)
    delta = _output_delta(params, z, y)
    layers = params.layers()
    pairs = [None] * len(layers)
    for depth in range(len(layers) - 1, -1, -1):
        a_in, _ = cache[depth]
        pairs[depth] = (a_in, delta)
        if depth:
            w, _ = layers[depth]
            delta = (delta @ w.T) * (cache[depth - 1][1] > 0)
    return pairs


def per_example_gradients(params: ModelParams, x, y, l2_reg: float = 0.0) -> np.ndarray:
    """Gradients of ``loss + l2_reg/2 * ||weights||^2``, one flat row per example."""
    pairs = _backprop(params, x, y)
    n = pairs[0][0].shape[0]
    blocks = []
    for (w, _), (a_in, delta) in zip(params.layers(), pairs):
        gw = (a_in[:, :, None] * delta[:, None, :]).reshape(n, -1)
        if l2_reg:
            gw = gw + l2_reg * w.reshape(1, -1)
        blocks += [gw, delta]
    return np.concatenate(blocks, axis=1)


def per_example_gradient(params: ModelParams, features, label: int, l2_reg: float = 0.0) -> np.ndarray:
    return per_example_gradients(params, np.atleast_2d(features), [label], l2_reg)[0]


def clipped_mean_gradient(params: ModelParams, x, y, l2_reg: float, clip_norm: float,
                          denominator: float | None = None):
    """Sum of per-example gradients clipped to ``clip_norm``, over ``denominator``.

    Works from the rank-one structure of each example's weight gradient so
    the ``n x P`` gradient matrix is never formed. Returns the averaged
    gradient and the pre-clip per-example norms.
    """
    pairs = _backprop(params, x, y)
    n = pairs[0][0].shape[0]
    layers = params.layers()
    sq = np.zeros(n)
    for (w, _), (a_in, delta) in zip(layers, pairs):
        a2 = np.einsum("ij,ij->i", a_in, a_in)
        d2 = np.einsum("ij,ij->i", delta, delta)
        sq += a2 * d2 + d2
        if l2_reg:
            cross = np.einsum("ij,ij->i", a_in @ w, delta)
            sq += 2.0 * l2_reg * cross + l2_reg ** 2 * np.sum(w * w)
    norms = np.sqrt(np.maximum(sq, 0.0))
    if np.isinf(clip_norm):
        factor = np.ones(n)
    else:
        with np.errstate(divide="ignore"):
            factor = np.minimum(1.0, clip_norm / norms)
        factor[norms == 0] = 1.0
    denominator = n if denominator is None else denominator
    out = np.empty(params.size)
    for (w, _), (sw, sb), (a_in, delta) in zip(layers, params.layers(out), pairs):
        fd = delta * factor[:, None]
        sw[...] = a_in.T @ fd
        if l2_reg:
            sw += l2_reg * factor.sum() * w
        sb[...] = fd.sum(axis=0)
    out /= denominator
    return out, norms
