"""Analytically auditable case: ridge regression with output perturbation.

The mechanism releases ``w = (lam I + X^T X)^{-1} X^T Y + N(0, s^2 I)`` with
``s^2 = 2 ln(1.25/delta) (2/lam)^2 / eps^2``. The poison pair appends the
least-variance right singular vector ``v_d`` of ``X`` with label ``+0.5`` or
``-0.5``, which moves the optimum by exactly ``v_d / (lam + mu_d + 1)``
where ``mu_d`` is the smallest eigenvalue of ``X^T X`` (the squared smallest
singular value of ``X``).
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.stats import norm

from dpaudit.estimator import EpsilonEstimate, TrialCounts, audit_eps
from dpaudit.numerics import RngStream, as_matrix, svd

POISON_LABEL = 0.5


@dataclasses.dataclass(frozen=True, eq=False)
class RegressionData:
    x: np.ndarray
    y: np.ndarray


def _validate(x, y):
    x = as_matrix(x)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (x.shape[0],):
        raise ValueError(f"y must have shape ({x.shape[0]},), got {y.shape}")
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms > 1 + 1e-12):
        bad = int(np.argmax(norms))
        raise ValueError(f"row {bad} has norm {norms[bad]:.6g} > 1")
    if np.any(np.abs(y) > 0.5):
        raise ValueError("labels must lie in [-0.5, 0.5]")
    return x, y


def ridge_poison_pair(x, y) -> tuple[RegressionData, RegressionData]:
    """Append ``(v_d, +0.5)`` and ``(v_d, -0.5)``; the pair differs in one label."""
    x, y = _validate(x, y)
    v_d = svd(x).smallest_vector
    xp = np.vstack([x, v_d])
    return (RegressionData(xp, np.append(y, POISON_LABEL)),
            RegressionData(xp, np.append(y, -POISON_LABEL)))


def ridge_solution(x, y, lam: float) -> np.ndarray:
    if not lam > 0:
        raise ValueError("lam must be positive")
    x = np.asarray(x, dtype=np.float64)
    gram = lam * np.eye(x.shape[1]) + x.T @ x
    return np.linalg.solve(gram, x.T @ np.asarray(y, dtype=np.float64))


def output_perturbation_std(lam: float, eps: float, delta: float) -> float:
    return math.sqrt(2.0 * math.log(1.25 / delta)) * (2.0 / lam) / eps


def smallest_gram_eigenvalue(x) -> float:
    return svd(x).smallest_value ** 2


def theorem_eps(lam: float, eps: float, delta: float, mu_d: float) -> float:
    """``lam eps / ((1 + lam + mu_d) sqrt(pi ln(1.25/delta))) - 4 delta``."""
    return lam * eps / ((1.0 + lam + mu_d) * math.sqrt(math.pi * math.log(1.25 / delta))) - 4.0 * delta


def distinguisher_success(lam: float, eps: float, delta: float, mu_d: float, noise_scale: float = 1.0) -> float:
    """Exact probability the optimal threshold test labels a release correctly."""
    c = 0.5 / (lam + mu_d + 1.0)
    return float(norm.cdf(c / (noise_scale * output_perturbation_std(lam, eps, delta))))


@dataclasses.dataclass(frozen=True, eq=False)
class RidgeAudit:
    estimate: EpsilonEstimate
    w0: np.ndarray
    w1: np.ndarray
    v_d: np.ndarray
    mu_d: float
    closed_form_error: float
    theorem_eps: float
    success_probability: float


def ridge_audit(x, y, lam: float, eps: float, delta: float, trials: int, rng: RngStream,
                alpha: float = 0.01, noise_scale: float = 1.0, tol: float = 1e-8) -> RidgeAudit:
    """Monte-Carlo audit of output-perturbed ridge regression.

    ``noise_scale`` multiplies the calibrated noise std (1 is the private
    mechanism). The output set is ``{w : (w - (w0 + w1)/2) . v_d < 0}``.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    d0, d1 = ridge_poison_pair(x, y)
    v_d = d0.x[-1]
    mu_d = smallest_gram_eigenvalue(_validate(x, y)[0])
    w0 = ridge_solution(d0.x, d0.y, lam)
    w1 = ridge_solution(d1.x, d1.y, lam)
    err = float(np.max(np.abs((w0 - w1) - v_d / (lam + mu_d + 1.0))))
    assert err <= tol, f"closed-form parameter gap violated by {err:.3g}"
    std = noise_scale * output_perturbation_std(lam, eps, delta)
    mid = 0.5 * (w0 + w1) @ v_d
    gen = rng.generator
    dim = w0.size
    rel0 = (w0 + std * gen.standard_normal((trials, dim))) @ v_d
    rel1 = (w1 + std * gen.standard_normal((trials, dim))) @ v_d
    counts = TrialCounts(int(np.count_nonzero(rel0 - mid < 0)), int(np.count_nonzero(rel1 - mid < 0)), trials)
    est = audit_eps(counts, k=1, delta=delta, alpha=alpha)
    return RidgeAudit(est, w0, w1, v_d, mu_d, err, theorem_eps(lam, eps, delta, mu_d),
                      distinguisher_success(lam, eps, delta, mu_d, noise_scale))


def ridge_audit_oracle(x, y, lam: float, eps: float, delta: float, trials: int, rng: RngStream,
                       alpha: float = 0.01, noise_scale: float = 1.0) -> EpsilonEstimate:
    return ridge_audit(x, y, lam, eps, delta, trials, rng, alpha, noise_scale).estimate


def random_design(n: int, d: int, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Rows uniform on the unit sphere scaled by U(0, 1); labels U(-0.5, 0.5)."""
    g = rng.generator
    x = g.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    x *= g.uniform(0.0, 1.0, size=(n, 1))
    return x, g.uniform(-0.5, 0.5, size=n)
