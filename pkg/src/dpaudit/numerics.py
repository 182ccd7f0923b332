"""Dense linear algebra, seeded sampling and special functions.

Everything here is a pure function of its inputs plus an explicit
:class:`RngStream`; no module-level random state is ever touched.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy import special


def as_matrix(x, name: str = "x") -> np.ndarray:
    """Return ``x`` as a finite 2-D float64 array or raise ``ValueError``."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Streams with the same pair produce identical draws; distinct stream ids
    are derived through ``numpy.random.SeedSequence`` spawn keys and are
    statistically independent. A stream is stateful once drawn from and must
    not be shared between concurrent consumers.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


@dataclasses.dataclass(frozen=True)
class SvdResult:
    """Thin left factor, padded singular values and a full right basis.

    ``v`` is always ``d x d`` so the least-significant right singular vector
    exists even when the matrix has fewer rows than columns; in that case
    ``singular_values`` is zero-padded to length ``d``.
    """

    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray

    @property
    def smallest_vector(self) -> np.ndarray:
        return self.v[:, -1]

    @property
    def smallest_value(self) -> float:
        return float(self.singular_values[-1])

    def reconstruct(self) -> np.ndarray:
        r = self.u.shape[1]
        return (self.u * self.singular_values[:r]) @ self.v[:, :r].T


def svd(x) -> SvdResult:
    """Singular value decomposition with a deterministic sign convention.

    Singular values are sorted non-increasing. Each right singular vector is
    flipped so its largest-magnitude entry is positive (the matching left
    vector is flipped with it). Among equal smallest singular values the last
    column after sorting is the one reported by ``smallest_vector``.
    """
    x = as_matrix(x)
    n, d = x.shape
    u, s, vt = np.linalg.svd(x, full_matrices=True)
    r = min(n, d)
    u = u[:, :r]
    v = vt.T.copy()
    values = np.zeros(d)
    values[:r] = s
    for j in range(d):
        col = v[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            v[:, j] = -col
            if j < r:
                u[:, j] = -u[:, j]
    return SvdResult(u=u, singular_values=values, v=v)


def gaussian_vector(rng: RngStream, dim: int, std: float) -> np.ndarray:
    """Draw ``dim`` i.i.d. N(0, std^2) values.

    The standard-normal draws are always consumed, so a stream's later state
    does not depend on ``std``; ``std == 0`` therefore yields zeros.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if not std >= 0:
        raise ValueError(f"std must be non-negative, got {std}")
    z = rng.generator.standard_normal(dim)
    if std == 0:
        return np.zeros(dim)
    return z * std


def beta_inv_cdf(p: float, a: float, b: float, max_iter: int = 200) -> float:
    """Quantile of Beta(a, b) by bisection on the regularized incomplete beta.

    Bisection runs on the bracket [0, 1] until the bracket collapses to
    adjacent floats or ``max_iter`` halvings have been made.
    """
    if not 0 < p < 1:
        raise ValueError(f"p must be in (0, 1), got {p}")
    if not (a > 0 and b > 0):
        raise ValueError(f"shape parameters must be positive, got a={a}, b={b}")
    lo, hi = 0.0, 1.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if special.betainc(a, b, mid) < p:
            lo = mid
        else:
            hi = mid
    # Return whichever bracket end has the smaller CDF residual.
    if abs(special.betainc(a, b, lo) - p) <= abs(special.betainc(a, b, hi) - p):
        return lo
    return hi


def glorot_init(rng: RngStream, fan_in: int, fan_out: int, scale_multiplier: float = 1.0) -> np.ndarray:
    """Glorot-normal matrix of shape ``(fan_in, fan_out)`` with scaled std.

    The std is ``scale_multiplier * sqrt(2 / (fan_in + fan_out))``. A zero
    multiplier gives the all-zeros matrix (fixed initialization).
    """
    if fan_in < 1 or fan_out < 1:
        raise ValueError("fans must be >= 1")
    if not scale_multiplier >= 0:
        raise ValueError("scale_multiplier must be non-negative")
    std = scale_multiplier * np.sqrt(2.0 / (fan_in + fan_out))
    return gaussian_vector(rng, fan_in * fan_out, std).reshape(fan_in, fan_out)
