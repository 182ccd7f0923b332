"""From Monte-Carlo counts to high-confidence lower bounds on epsilon.

Conventions: ``p0`` is always the probability placed in the numerator of the
privacy ratio (the arm expected to land in the output set more often) and
``p1`` the denominator. Lower bounds are computed for the numerator and
upper bounds for the denominator, each at tail mass ``alpha / 2``.
"""

from __future__ import annotations

import dataclasses
import functools
import math

import numpy as np

from dpaudit.models import loss
from dpaudit.numerics import beta_inv_cdf


@dataclasses.dataclass(frozen=True)
class TrialCounts:
    ct0: int
    ct1: int
    t: int

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("t must be >= 1")
        if not (0 <= self.ct0 <= self.t and 0 <= self.ct1 <= self.t):
            raise ValueError(f"counts must lie in [0, t], got {self}")

    def complement(self) -> "TrialCounts":
        return TrialCounts(self.t - self.ct0, self.t - self.ct1, self.t)

    def swapped(self) -> "TrialCounts":
        return TrialCounts(self.ct1, self.ct0, self.t)


@dataclasses.dataclass(frozen=True)
class EpsilonEstimate:
    p0_hat: float
    p1_hat: float
    eps_lb: float
    k: int
    delta: float
    alpha: float | None
    used_complement: bool = False
    used_arm_swap: bool = False
    counts: TrialCounts | None = None

    def recompute(self) -> float:
        return eps_from_probs(self.p0_hat, self.p1_hat, self.k, self.delta)


@functools.lru_cache(maxsize=65536)
def clopper_pearson(successes: int, t: int, tail_mass: float, side: str) -> float:
    """One-sided exact binomial bound.

    ``lower`` is the ``tail_mass`` quantile of Beta(s, t - s + 1) (0 when
    s = 0); ``upper`` is the ``1 - tail_mass`` quantile of Beta(s + 1, t - s)
    (1 when s = t).
    """
    if t < 1 or not 0 <= successes <= t:
        raise ValueError(f"invalid counts successes={successes}, t={t}")
    if not 0 < tail_mass < 1:
        raise ValueError(f"tail_mass must be in (0, 1), got {tail_mass}")
    if side == "lower":
        if successes == 0:
            return 0.0
        return beta_inv_cdf(tail_mass, successes, t - successes + 1)
    if side == "upper":
        if successes == t:
            return 1.0
        return beta_inv_cdf(1.0 - tail_mass, successes + 1, t - successes)
    raise ValueError(f"side must be 'lower' or 'upper', got {side!r}")


def group_privacy_poly(x, p0: float, p1: float, k: int, delta: float):
    """``p1 x^(k+1) - (p1 - delta) x^k - p0 x + (p0 - delta)``.

    Non-negative exactly where ``x = exp(eps)`` is consistent with the
    k-fold group-privacy bound ``p0 <= x^k p1 + delta (x^k - 1)/(x - 1)``.
    """
    xk = x ** k
    return p1 * xk * x - (p1 - delta) * xk - p0 * x + (p0 - delta)


def _largest_root(p0: float, p1: float, k: int, delta: float, rtol: float = 1e-12) -> float:
    # The polynomial vanishes at 1 and is convex on [1, inf); it dips below
    # zero (and so has a single root above 1) iff its slope at 1 is negative.
    if p0 - p1 - k * delta <= 0:
        return 1.0
    hi = math.e
    cap = math.exp(50.0)
    while group_privacy_poly(hi, p0, p1, k, delta) <= 0:
        if hi >= cap:
            return cap
        hi = min(hi * 2.0, cap)
    lo = 1.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if group_privacy_poly(mid, p0, p1, k, delta) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    return hi


def eps_from_probs(p0_hat: float, p1_hat: float, k: int, delta: float = 0.0) -> float:
    """Largest epsilon ruled out by the probability pair for a k-row change.

    With ``delta == 0`` this is ``max(0, ln(p0/p1) / k)`` and ``+inf`` when
    ``p1_hat == 0 < p0_hat``. With ``delta > 0`` it is the log of the largest
    real root above 1 of the group-privacy polynomial, or 0 if none exists.
    """
    for name, p in (("p0_hat", p0_hat), ("p1_hat", p1_hat)):
        if not 0 <= p <= 1:
            raise ValueError(f"{name} must be a probability, got {p}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    if delta == 0:
        if p0_hat <= p1_hat:
            return 0.0
        if p1_hat == 0:
            return math.inf
        return math.log(p0_hat / p1_hat) / k
    return math.log(_largest_root(p0_hat, p1_hat, k, delta))


def complement_candidates(p_big: float, p_small: float, k: int, delta: float) -> tuple[float, float]:
    """Epsilon from an output set and from its complement, raw probabilities.

    Returns ``(direct, complement)`` where ``direct`` uses ``(p_big, p_small)``
    and ``complement`` uses ``(1 - p_small, 1 - p_big)``.
    """
    return (eps_from_probs(p_big, p_small, k, delta),
            eps_from_probs(1.0 - p_small, 1.0 - p_big, k, delta))


def _estimate(counts: TrialCounts, k: int, delta: float, alpha: float) -> tuple[float, float, float]:
    p0 = clopper_pearson(counts.ct0, counts.t, alpha / 2, "lower")
    p1 = clopper_pearson(counts.ct1, counts.t, alpha / 2, "upper")
    return p0, p1, eps_from_probs(p0, p1, k, delta)


def complement_rule(counts: TrialCounts, k: int, delta: float, alpha: float,
                    swapped: bool = False) -> EpsilonEstimate:
    """Best of the output set and its complement for one arm ordering.

    ``counts.ct0`` feeds the numerator. Both candidates get their own
    Clopper-Pearson bounds; the complement wins only on strictly larger
    epsilon.
    """
    p0, p1, eps = _estimate(counts, k, delta, alpha)
    c0, c1, ceps = _estimate(counts.complement(), k, delta, alpha)
    if ceps > eps:
        return EpsilonEstimate(c0, c1, ceps, k, delta, alpha, True, swapped, counts)
    return EpsilonEstimate(p0, p1, eps, k, delta, alpha, False, swapped, counts)


def audit_eps(counts: TrialCounts, k: int = 1, delta: float = 0.0, alpha: float = 0.01) -> EpsilonEstimate:
    """Epsilon lower bound valid with probability at least ``1 - alpha``.

    Tries both arm orderings and, for each, the output set and its
    complement; reports the largest. ``counts`` in the result are always the
    original (unswapped, uncomplemented) counts.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if k < 1:
        raise ValueError("k must be >= 1")
    direct = complement_rule(counts, k, delta, alpha)
    swap = complement_rule(counts.swapped(), k, delta, alpha, swapped=True)
    best = swap if swap.eps_lb > direct.eps_lb else direct
    return dataclasses.replace(best, counts=counts)


def eps_opt(t: int, alpha: float = 0.01, k: int = 1, delta: float = 0.0) -> float:
    """The Monte-Carlo ceiling: the estimate for perfect separation."""
    return audit_eps(TrialCounts(t, 0, t), k, delta, alpha).eps_lb


def membership_advantage(train_losses, test_losses, threshold: float) -> float:
    """Fraction of correct member/non-member calls from a loss threshold."""
    train_losses = np.asarray(train_losses)
    test_losses = np.asarray(test_losses)
    if train_losses.shape != test_losses.shape:
        raise ValueError("train and test sets must have the same size")
    correct = np.count_nonzero(train_losses < threshold) + np.count_nonzero(test_losses > threshold)
    return correct / (2 * train_losses.size)


def eps_from_advantage(adv: float) -> EpsilonEstimate:
    """``max(0, ln(Adv / (1 - Adv)))`` packaged as an estimate with k=1, delta=0."""
    if not 0 <= adv <= 1:
        raise ValueError("advantage must be a probability")
    return EpsilonEstimate(adv, 1.0 - adv, eps_from_probs(adv, 1.0 - adv, 1, 0.0), 1, 0.0, None)


def membership_inference_audit(params, training_loss: float, train, test) -> EpsilonEstimate:
    """Loss-threshold membership inference on equal-size member/non-member sets."""
    if train.n != test.n:
        raise ValueError(f"train and test must have equal size, got {train.n} and {test.n}")
    adv = membership_advantage(loss(params, train.features, train.labels),
                               loss(params, test.features, test.labels), training_loss)
    return eps_from_advantage(adv)
