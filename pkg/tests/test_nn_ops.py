import numpy as np
import pytest

from earshot.nn import (
    AdamState,
    adam_step,
    bank_backward,
    bank_forward,
    conv_time_channel,
    cross_entropy_l2,
    dense,
    dense_backward,
    dropout,
    dropout_backward,
    init_bank,
    l2_penalty,
    one_max_pool,
    relu,
    relu_grad,
    softmax,
)


def naive_conv(x, filt):
    """Triple-loop oracle for the cross-channel temporal convolution."""
    f, t, d = x.shape
    _, w = filt.shape
    out = np.zeros((t - w + 1, d))
    for i in range(t - w + 1):
        for j in range(d):
            acc = 0.0
            for n in range(w):
                acc += np.dot(x[:, i + n, j], filt[:, n])
            out[i, j] = acc
    return out


class TestConvTimeChannel:
    def test_all_ones_width3(self):
        x = np.ones((36, 10, 6))
        filt = np.ones((36, 3))
        out = conv_time_channel(x, filt)
        assert np.all(out == 108.0)

    def test_output_shape(self):
        x = np.zeros((36, 31, 6))
        out = conv_time_channel(x, np.zeros((36, 5)))
        assert out.shape == (27, 6)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            f = int(rng.integers(2, 20))
            t = int(rng.integers(8, 24))
            d = int(rng.integers(1, 7))
            w = int(rng.choice([3, 5, 7]))
            if w >= t:
                continue
            x = rng.standard_normal((f, t, d))
            filt = rng.standard_normal((f, w))
            assert np.allclose(conv_time_channel(x, filt), naive_conv(x, filt), atol=1e-12)

    def test_width_too_large(self):
        with pytest.raises(ValueError):
            conv_time_channel(np.zeros((4, 5, 2)), np.zeros((4, 5)))

    def test_height_mismatch(self):
        with pytest.raises(ValueError):
            conv_time_channel(np.zeros((4, 9, 2)), np.zeros((3, 3)))


class TestBankForward:
    def test_matches_single_filter_composition(self):
        rng = np.random.default_rng(1)
        f, t, d, q = 5, 14, 3, 2
        params = init_bank(rng, f, q, dtype=np.float64)
        x = rng.standard_normal((2, f, t, d))
        z, _ = bank_forward(params, x)
        assert z.shape == (2, 3 * q)
        col = 0
        for w in (3, 5, 7):
            for qi in range(q):
                for b in range(2):
                    conv = conv_time_channel(x[b], params[f"conv_w{w}"][qi])
                    expected, _ = one_max_pool(relu(conv + params[f"conv_b{w}"][qi]))
                    assert z[b, col] == pytest.approx(expected, abs=1e-12)
                col += 1

    def test_backward_bias_gradient_is_active_count(self):
        rng = np.random.default_rng(2)
        params = init_bank(rng, 4, 2, dtype=np.float64)
        x = rng.random((3, 4, 12, 2)) + 0.5  # positive activations
        z, cache = bank_forward(params, x)
        grads = bank_backward(params, cache, np.ones_like(z))
        for w in (3, 5, 7):
            assert grads[f"conv_b{w}"].shape == (2,)


class TestRelu:
    def test_values(self):
        assert relu(np.array(-1.0)) == 0.0
        assert relu(np.array(3.5)) == 3.5

    def test_gradient_matches_finite_differences_away_from_kink(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(100)
        x = x[np.abs(x) > 1e-3]
        eps = 1e-6
        numeric = (relu(x + eps) - relu(x - eps)) / (2 * eps)
        assert np.allclose(relu_grad(x), numeric, atol=1e-6)


class TestOneMaxPool:
    def test_single_peak(self):
        fmap = np.zeros((5, 4))
        fmap[2, 3] = 7.2
        value, idx = one_max_pool(fmap)
        assert value == 7.2 and idx == (2, 3)

    def test_tie_routes_to_first_index(self):
        fmap = np.full((3, 3), 1.5)
        value, idx = one_max_pool(fmap)
        assert value == 1.5 and idx == (0, 0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(4)
        fmap = rng.standard_normal((11, 7))
        value, idx = one_max_pool(fmap)
        assert value == fmap.max()
        assert fmap[idx] == value

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            one_max_pool(np.zeros((0, 3)))


class TestDense:
    def test_identity(self):
        x = np.arange(6.0).reshape(2, 3)
        y, _ = dense(x, np.eye(3), np.zeros(3), "none")
        assert np.array_equal(y, x)

    def test_softmax_equal_logits(self):
        y, _ = dense(np.zeros((1, 4)), np.zeros((4, 19)), np.zeros(19), "softmax")
        assert np.allclose(y, 1.0 / 19.0)

    def test_sigmoid_gradient_check(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((4, 6))
        w = rng.standard_normal((6, 3))
        b = rng.standard_normal(3)
        r = rng.standard_normal((4, 3))
        y, cache = dense(x, w, b, "sigmoid")
        dx, dw, db = dense_backward(cache, r)
        eps = 1e-6
        for arr, grad in ((w, dw), (b, db), (x, dx)):
            flat = arr.reshape(-1)
            for c in range(0, flat.size, 3):
                orig = flat[c]
                flat[c] = orig + eps
                up = float(np.sum(dense(x, w, b, "sigmoid")[0] * r))
                flat[c] = orig - eps
                down = float(np.sum(dense(x, w, b, "sigmoid")[0] * r))
                flat[c] = orig
                assert grad.reshape(-1)[c] == pytest.approx((up - down) / (2 * eps), abs=1e-6)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            dense(np.zeros((2, 3)), np.zeros((4, 2)), np.zeros(2))

    def test_unknown_activation(self):
        with pytest.raises(ValueError):
            dense(np.zeros((1, 2)), np.zeros((2, 2)), np.zeros(2), "tanh")


class TestDropout:
    def test_rate_zero_is_identity(self):
        x = np.arange(10.0)
        y, mask = dropout(x, 0.0, "train", seed=0)
        assert np.array_equal(y, x) and mask is None

    def test_eval_mode_is_identity(self):
        x = np.arange(10.0)
        y, mask = dropout(x, 0.9, "eval")
        assert np.array_equal(y, x) and mask is None

    def test_survivor_fraction(self):
        x = np.ones(1_000_000)
        y, _ = dropout(x, 0.5, "train", seed=42)
        survivors = np.count_nonzero(y) / x.size
        assert survivors == pytest.approx(0.5, abs=0.002)

    def test_inverted_scaling_preserves_expectation(self):
        # Each surviving entry is scaled by 1/(1-rate); per-entry std is 1,
        # so the mean over n entries is 1 +- 3/sqrt(n).
        x = np.ones(200_000)
        y, _ = dropout(x, 0.5, "train", seed=7)
        assert abs(y.mean() - 1.0) < 3.0 / np.sqrt(x.size)

    def test_deterministic_per_seed(self):
        x = np.ones(1000)
        a, _ = dropout(x, 0.3, "train", seed=5)
        b, _ = dropout(x, 0.3, "train", seed=5)
        assert np.array_equal(a, b)

    def test_backward_applies_mask(self):
        x = np.ones((4, 4))
        y, mask = dropout(x, 0.5, "train", seed=1)
        dy = np.ones_like(x)
        assert np.array_equal(dropout_backward(dy, mask), mask)

    def test_rate_out_of_range(self):
        with pytest.raises(ValueError):
            dropout(np.ones(3), 1.0, "train", seed=0)


class TestCrossEntropyL2:
    def test_perfect_prediction_zero_loss(self):
        pred = np.array([[0.0, 1.0, 0.0]])
        target = np.array([[0.0, 1.0, 0.0]])
        assert cross_entropy_l2(pred, target, (), 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_prediction_log_c(self):
        c = 19
        pred = np.full((1, c), 1.0 / c)
        target = np.zeros((1, c))
        target[0, 3] = 1.0
        assert cross_entropy_l2(pred, target, (), 0.0) == pytest.approx(np.log(19), rel=1e-12)

    def test_l2_term_arithmetic(self):
        pred = np.array([[0.0, 1.0]])
        target = np.array([[0.0, 1.0]])
        theta = {"w": np.array([2.0])}
        lam = 1e-3
        # (lam/2) * 2^2 = 2 * lam on top of the zero data loss
        assert cross_entropy_l2(pred, target, theta, lam) == pytest.approx(2 * lam)

    def test_unnormalized_rows_rejected(self):
        with pytest.raises(ValueError):
            cross_entropy_l2(np.array([[0.5, 0.6]]), np.array([[1.0, 0.0]]))

    def test_l2_penalty_over_dict(self):
        theta = {"a": np.array([1.0, 2.0]), "b": np.array([[2.0]])}
        assert l2_penalty(theta, 2.0) == pytest.approx(1.0 * (1 + 4 + 4))


class TestSoftmax:
    def test_simplex(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((50, 19)) * 10
        p = softmax(x)
        assert np.all(p >= 0)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)

    def test_shift_invariance(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((10, 5))
        assert np.allclose(softmax(x), softmax(x + 123.4), atol=1e-9)


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        params = {"w": np.array([1.0, -2.0])}
        state = AdamState(lr=0.1)
        adam_step(state, params, {"w": np.zeros(2)})
        assert np.array_equal(params["w"], [1.0, -2.0])

    def test_constant_gradient_step_approaches_lr_sign(self):
        lr = 1e-3
        params = {"w": np.array([0.0])}
        state = AdamState(lr=lr)
        g = {"w": np.array([0.37])}
        prev = params["w"].copy()
        for _ in range(500):
            prev = params["w"].copy()
            adam_step(state, params, g)
        step = params["w"] - prev
        assert step[0] == pytest.approx(-lr, rel=1e-3)

    def test_deterministic(self):
        def run():
            rng = np.random.default_rng(8)
            params = {"w": rng.standard_normal(5)}
            state = AdamState(lr=0.01)
            for _ in range(20):
                adam_step(state, params, {"w": rng.standard_normal(5)})
            return params["w"]

        assert np.array_equal(run(), run())

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adam_step(AdamState(), {"w": np.zeros(3)}, {"w": np.zeros(4)})
