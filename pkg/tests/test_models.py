import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpaudit.dpsgd import clip
from dpaudit.models import (
    ModelParams,
    accuracy,
    clipped_mean_gradient,
    init_params,
    logits,
    loss,
    per_example_gradient,
    per_example_gradients,
    predict,
)
from dpaudit.numerics import RngStream


def objective(params, x, y, l2):
    w = params.flat * params.weight_mask()
    return float(loss(params, x[None, :], [y])[0] + 0.5 * l2 * w @ w)


def central_diff(params, x, y, l2, h=1e-5):
    g = np.zeros(params.size)
    for i in range(params.size):
        e = np.zeros(params.size)
        e[i] = h
        g[i] = (objective(params.replace(params.flat + e), x, y, l2)
                - objective(params.replace(params.flat - e), x, y, l2)) / (2 * h)
    return g


def random_model(arch, d, classes, seed, hidden=6):
    params = init_params(arch, d, classes, 1.0, RngStream(seed, 0), hidden=hidden)
    # nonzero biases so hidden units are not all exactly on their kinks
    return params.replace(params.flat + 0.1 * RngStream(seed, 1).generator.standard_normal(params.size))


class TestGradients:
    def test_zero_logistic_symmetric_point(self):
        params = init_params("logistic", 3, 2, 0.0)
        x = np.array([1.0, -2.0, 0.5])
        xb = np.append(x, 1.0)
        for y, sign in ((1, 1.0), (0, -1.0)):
            g = per_example_gradient(params, x, y)
            np.testing.assert_allclose(np.linalg.norm(g), 0.5 * np.linalg.norm(xb))
            np.testing.assert_allclose(g, -0.5 * sign * xb)

    @pytest.mark.parametrize("arch", ["logistic", "fnn"])
    @pytest.mark.parametrize("classes", [2, 3])
    def test_finite_differences(self, arch, classes):
        worst = 0.0
        for probe in range(25):
            d = 4
            params = random_model(arch, d, classes, probe)
            rng = RngStream(probe, 2).generator
            x = rng.standard_normal(d)
            y = int(rng.integers(classes))
            l2 = [0.0, 0.01][probe % 2]
            g = per_example_gradient(params, x, y, l2)
            fd = central_diff(params, x, y, l2)
            worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-8))
        assert worst < 1e-4

    def test_duplicated_example(self):
        params = random_model("fnn", 3, 2, 0)
        x = np.array([[0.1, 0.2, 0.3], [0.1, 0.2, 0.3]])
        g = per_example_gradients(params, x, [1, 1])
        np.testing.assert_array_equal(g[0], g[1])

    @pytest.mark.parametrize("arch,classes,l2", [("logistic", 2, 0.0), ("fnn", 2, 0.05), ("fnn", 4, 0.0),
                                                 ("logistic", 3, 0.1)])
    def test_fast_clipped_mean_matches_rows(self, arch, classes, l2):
        params = random_model(arch, 5, classes, 11)
        rng = RngStream(11, 3).generator
        x = 3 * rng.standard_normal((40, 5))
        y = rng.integers(classes, size=40)
        rows = per_example_gradients(params, x, y, l2)
        for c in (0.3, 1.0, math.inf):
            grad, norms = clipped_mean_gradient(params, x, y, l2, c, denominator=50)
            np.testing.assert_allclose(norms, np.linalg.norm(rows, axis=1), rtol=1e-10)
            clipped = rows if math.isinf(c) else np.stack([clip(g, c) for g in rows])
            np.testing.assert_allclose(grad, clipped.sum(axis=0) / 50, rtol=1e-9, atol=1e-13)


class TestClip:
    def test_scales_down(self):
        g = np.array([2.0, 0.0])
        np.testing.assert_allclose(clip(g, 1.0), g / 2)

    def test_noop_below(self):
        g = np.array([0.3, 0.4])
        np.testing.assert_array_equal(clip(g, 1.0), g)

    @settings(max_examples=50)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
    def test_norm_is_min(self, values):
        g = np.array(values)
        assert np.linalg.norm(clip(g, 0.5)) == pytest.approx(min(np.linalg.norm(g), 0.5), abs=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            clip(np.ones(2), 0.0)


class TestLossPredict:
    def test_uniform_predictor(self):
        for classes in (2, 3):
            params = init_params("logistic", 4, classes, 0.0)
            expected = math.log(classes)
            np.testing.assert_allclose(loss(params, np.ones((3, 4)), [0, 1, 1]), expected)

    def test_descent_step(self):
        params = random_model("fnn", 3, 2, 5)
        x, y = np.array([0.5, -1.0, 2.0]), 1
        before = loss(params, x, [y])[0]
        after = loss(params.replace(params.flat - 1e-3 * per_example_gradient(params, x, y)), x, [y])[0]
        assert after < before

    def test_shift_invariance(self):
        params = random_model("logistic", 3, 4, 2)
        x = RngStream(2, 5).generator.standard_normal((10, 3))
        s = predict(params, x)
        np.testing.assert_array_equal(np.argmax(s, axis=1), np.argmax(s + 17.0, axis=1))

    def test_binary_scores(self):
        params = random_model("logistic", 3, 2, 3)
        x = np.ones((2, 3))
        np.testing.assert_allclose(predict(params, x), np.column_stack([np.zeros(2), logits(params, x)[:, 0]]))

    def test_loss_nonnegative_and_accuracy(self):
        params = random_model("fnn", 3, 3, 4)
        x = RngStream(4, 1).generator.standard_normal((20, 3))
        y = np.arange(20) % 3
        assert np.all(loss(params, x, y) >= 0)
        assert 0 <= accuracy(params, x, y) <= 1

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            ModelParams("logistic", 3, 2, np.zeros(5))
        with pytest.raises(ValueError):
            logits(init_params("logistic", 3, 2, 0.0), np.ones((2, 4)))
