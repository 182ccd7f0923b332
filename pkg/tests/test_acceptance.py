"""Acceptance gate: one recorded PASS/FAIL line per criterion.

Each test computes its criterion at the stated tolerance, records the line
(shown in the "acceptance criteria" section of the pytest summary) and then
asserts it.
"""

import dataclasses
import math
import time

import numpy as np
from scipy.stats import spearmanr

from dpaudit.dpsgd import SgdConfig, clip
from dpaudit.estimator import (
    TrialCounts,
    audit_eps,
    clopper_pearson,
    complement_candidates,
    eps_from_probs,
    eps_opt,
)
from dpaudit.harness import AuditConfig, run_audit
from dpaudit.models import init_params, loss, per_example_gradient
from dpaudit.numerics import RngStream
from dpaudit.ridge import random_design, ridge_audit

Q = 0.005 ** (1 / 500)


def detection_floor(t, alpha):
    """Smallest epsilon the estimator can certify from T trials per arm.

    Scans success probabilities upward from 1/2 with counts at their
    expectations and reports ln(p / (1 - p)) at the first positive estimate.
    """
    for c in range(t // 2, t + 1):
        if audit_eps(TrialCounts(c, t - c, t), 1, 0.0, alpha).eps_lb > 0:
            p = c / t
            return math.log(p / (1 - p))
    return math.inf


class TestAcceptance:
    def test_monte_carlo_ceiling(self, acceptance):
        start = time.perf_counter()
        value = eps_opt(500, 0.01, 1)
        took = time.perf_counter() - start
        ok = abs(value - 4.54) <= 0.01 and took < 1
        assert acceptance("Monte-Carlo ceiling", ok,
                          f"eps_opt(500, 0.01, 1) = {value:.6f} (target 4.54 +- 0.01), {took:.3f}s < 1s")

    def test_clopper_pearson_exactness(self, acceptance):
        start = time.perf_counter()
        lo = clopper_pearson(500, 500, 0.005, "lower")
        hi = clopper_pearson(0, 500, 0.005, "upper")
        err = max(abs(lo - Q), abs(hi - (1 - Q)))
        # coverage: 10,000 binomial draws, one-sided bounds at 0.005 each, two-sided at 0.01
        t, p, draws = 100, 0.3, 10_000
        succ = RngStream(2024, 0).generator.binomial(t, p, size=draws)
        lows = np.array([clopper_pearson(int(s), t, 0.005, "lower") for s in succ])
        highs = np.array([clopper_pearson(int(s), t, 0.005, "upper") for s in succ])
        cover = {
            "lower": (np.mean(lows <= p), 0.995),
            "upper": (np.mean(highs >= p), 0.995),
            "two-sided": (np.mean((lows <= p) & (p <= highs)), 0.99),
        }
        cov_ok = all(c >= nominal - 3 * math.sqrt(nominal * (1 - nominal) / draws) for c, nominal in cover.values())
        took = time.perf_counter() - start
        ok = err <= 1e-9 and cov_ok and took < 30
        cov_txt = ", ".join(f"{k} {c:.4f}>={n}-3sd" for k, (c, n) in cover.items())
        assert acceptance("Clopper-Pearson exactness", ok,
                          f"max closed-form error {err:.2e} (<= 1e-9); coverage {cov_txt}; {took:.2f}s < 30s")

    def test_worked_example(self, acceptance):
        direct, comp = complement_candidates(0.8, 0.4, 1, 0.0)
        small_delta = eps_from_probs(0.8, 0.4, 1, 1e-12)
        errs = (abs(direct - math.log(2)), abs(comp - math.log(3)))
        ok = max(errs) <= 1e-12 and abs(small_delta - math.log(2)) <= 1e-6
        assert acceptance("complement worked example", ok,
                          f"direct {direct:.15f} (ln 2 err {errs[0]:.1e}), complement {comp:.15f} "
                          f"(ln 3 err {errs[1]:.1e}), delta=1e-12 gives {small_delta:.12f} (within 1e-6 of ln 2)")

    def test_complement_grid(self, acceptance):
        start = time.perf_counter()
        delta, mismatches, cells = 1e-5, [], 0
        for k in (1, 4):
            for i in range(1, 20):
                for j in range(1, i):
                    p_big, p_small = i / 20, j / 20
                    direct, comp = complement_candidates(p_big, p_small, k, delta)
                    wins = comp > direct + 1e-9
                    predicted = p_big > p_small + k * delta and i + j > 20
                    cells += 1
                    if wins != predicted:
                        mismatches.append((k, p_big, p_small))
        took = time.perf_counter() - start
        ok = not mismatches and took < 10
        assert acceptance("complement grid", ok,
                          f"{cells} (p_big, p_small, k) cells, {len(mismatches)} mismatches; {took:.2f}s < 10s")

    def test_ridge_study(self, acceptance):
        start = time.perf_counter()
        lam, eps, delta, trials, alpha = 1.0, 1.0, 1e-5, 5000, 0.01
        x, y = random_design(100, 10, RngStream(0, 0))
        res = ridge_audit(x, y, lam, eps, delta, trials, RngStream(0, 6), alpha)
        slack = detection_floor(trials, alpha)
        bound = res.theorem_eps - slack
        # soundness over repeated release batches, each a 99%-confidence statement
        reps = [ridge_audit(x, y, lam, eps, delta, trials, RngStream(s, 6), alpha).estimate.eps_lb
                for s in range(1, 21)]
        took = time.perf_counter() - start
        a = res.closed_form_error <= 1e-8
        b = res.estimate.eps_lb >= bound
        c = res.estimate.eps_lb <= eps and sum(r <= eps for r in reps) >= 19
        ok = a and b and c and took < 60
        assert acceptance("ridge study", ok,
                          f"(a) gap error {res.closed_form_error:.1e} <= 1e-8; (b) eps_lb {res.estimate.eps_lb:.4f} >= "
                          f"theorem {res.theorem_eps:.4f} - CP slack {slack:.4f}; (c) eps_lb <= 1 "
                          f"(and {sum(r <= eps for r in reps)}/20 repeats); {took:.1f}s < 60s")

    def test_perfect_separation(self, acceptance):
        start = time.perf_counter()
        cfg = AuditConfig(attack="clipbkd", model="lr", k=1, trials=500, alpha=0.01,
                          synthetic="gauss:n=1000,d=20", sgd=SgdConfig(noise_multiplier=0.0, init_scale=0.0))
        r = run_audit(cfg)
        took = time.perf_counter() - start
        ok = abs(r.eps_lb - 4.54) <= 0.01 and took < 300
        assert acceptance("perfect-separation audit", ok,
                          f"eps_lb {r.eps_lb:.4f} (target 4.54 +- 0.01), counts {r.counts}, "
                          f"train acc mean {r.accuracy['mean']:.3f}; {took:.1f}s < 300s")

    def test_randomized_response_soundness(self, acceptance):
        start = time.perf_counter()
        eps_star, t, reps = 1.0, 500, 100
        p = math.exp(eps_star) / (1 + math.exp(eps_star))
        gen = RngStream(77, 0).generator
        values = []
        for _ in range(reps):
            # the mechanism answers 1 w.p. p on D0 and 1 - p on D1; output set O = {1}
            counts = TrialCounts(int(gen.binomial(t, p)), int(gen.binomial(t, 1 - p)), t)
            values.append(audit_eps(counts, 1, 0.0, 0.01).eps_lb)
        took = time.perf_counter() - start
        sound = sum(v <= eps_star for v in values)
        ok = sound >= 99 and took < 60
        assert acceptance("randomized-response soundness", ok,
                          f"{sound}/100 repetitions with eps_lb <= 1 (need >= 99), max {max(values):.3f}, "
                          f"mean {np.mean(values):.3f}; {took:.2f}s < 60s")

    def test_trend_suite(self, acceptance):
        start = time.perf_counter()
        base = AuditConfig(trials=100, k=1, synthetic="gauss:n=1000,d=20")
        grid = ((5.02, 1.0), (2.68, 2.0), (1.55, 4.0), (0.0, math.inf))
        by_eps = []
        for sigma, eps_th in grid:
            sgd = SgdConfig(noise_multiplier=sigma, claimed_eps_th=eps_th)
            by_eps.append(run_audit(dataclasses.replace(base, sgd=sgd)).eps_lb)
        rho = spearmanr([1, 2, 4, 5], by_eps).statistic
        fixed = run_audit(dataclasses.replace(base, sgd=SgdConfig(init_scale=0.0))).eps_lb
        random = run_audit(dataclasses.replace(base, sgd=SgdConfig(init_scale=2.0))).eps_lb
        images = dataclasses.replace(base, k=4, synthetic="images:n=1000",
                                     sgd=SgdConfig(noise_multiplier=2.68, claimed_eps_th=2.0))
        clipbkd = run_audit(images).eps_lb
        backdoor = run_audit(dataclasses.replace(images, attack="backdoor")).eps_lb
        took = time.perf_counter() - start
        a, b, c = rho > 0, fixed >= random, clipbkd >= backdoor
        ok = a and b and c and took < 1200
        eps_txt = ", ".join(f"{e:g}:{v:.3f}" for (_, e), v in zip(grid, by_eps))
        assert acceptance("trend suite", ok,
                          f"(a) eps_lb by eps_th {{{eps_txt}}} spearman {rho:.2f} > 0; (b) init 0 {fixed:.3f} >= "
                          f"init 2 {random:.3f}; (c) ClipBKD {clipbkd:.3f} >= backdoor {backdoor:.3f}; "
                          f"{took:.0f}s < 1200s")

    def test_null_attack_validity(self, acceptance):
        start = time.perf_counter()
        values = []
        for seed in range(20):
            cfg = AuditConfig(k=0, trials=100, seed=seed, synthetic="gauss:n=1000,d=20",
                              sgd=SgdConfig(noise_multiplier=[0.0, 1.55][seed % 2]))
            values.append(run_audit(cfg).eps_lb)
        took = time.perf_counter() - start
        zero = sum(v == 0.0 for v in values)
        ok = zero >= (1 - 0.01) * 20
        assert acceptance("null-attack validity", ok,
                          f"{zero}/20 k=0 audits with eps_lb = 0 (need >= {0.99 * 20:.1f}), "
                          f"max {max(values):.3f}; {took:.0f}s")

    def test_gradient_correctness(self, acceptance):
        h, worst = 1e-5, {}
        for arch in ("logistic", "fnn"):
            errs = []
            for probe in range(100):
                rng = RngStream(probe, 31).generator
                classes = 2 + probe % 2
                params = init_params(arch, 5, classes, 1.0, RngStream(probe, 32), hidden=8)
                params = params.replace(params.flat + 0.1 * rng.standard_normal(params.size))
                x, y = rng.standard_normal(5), int(rng.integers(classes))
                g = per_example_gradient(params, x, y)
                fd = np.empty(params.size)
                for i in range(params.size):
                    e = np.zeros(params.size)
                    e[i] = h
                    fd[i] = (loss(params.replace(params.flat + e), x, [y])[0]
                             - loss(params.replace(params.flat - e), x, [y])[0]) / (2 * h)
                errs.append(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
            worst[arch] = max(errs)
        vecs = RngStream(5, 33).generator.standard_normal((10_000, 30)) * np.logspace(-3, 3, 10_000)[:, None]
        clip_worst = max(np.linalg.norm(clip(v, 1.0)) for v in vecs)
        ok = max(worst.values()) <= 1e-4 and clip_worst <= 1.0 + 1e-12
        assert acceptance("gradient correctness", ok,
                          f"max relative FD error lr {worst['logistic']:.1e}, fnn {worst['fnn']:.1e} (<= 1e-4, "
                          f"100 probes each); max clipped norm {clip_worst:.15f} over 10,000 vectors (C = 1)")
