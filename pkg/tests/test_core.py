import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ser3d.core import (
    AdamState,
    adam_step,
    conv3d,
    dense,
    dropout,
    gradient_check,
    maxpool3d,
    maxpool3d_grad,
    relu,
    relu_grad,
    softmax_xent,
    softmax_xent_grad,
)
from ser3d.core.gradcheck import check_arrays
from ser3d.errors import DimensionError, NumericError, ParameterError


def direct_conv3d(x, k, b):
    """Six nested loops over output position and kernel window (plus channels)."""
    L, T, S, C = x.shape
    K, kL, kT, kS, _ = k.shape
    oL, oT, oS = (kL - 1) // 2, (kT - 1) // 2, (kS - 1) // 2
    out = np.zeros((L, T, S, K))
    for l in range(L):
        for t in range(T):
            for s in range(S):
                for i in range(kL):
                    for j in range(kT):
                        for m in range(kS):
                            ll, tt, ss = l + i - oL, t + j - oT, s + m - oS
                            if 0 <= ll < L and 0 <= tt < T and 0 <= ss < S:
                                out[l, t, s] += k[:, i, j, m, :] @ x[ll, tt, ss]
    return out + b


class TestConv3d:
    def test_zero_input_gives_bias(self):
        b = np.array([0.5, -2.0, 3.0])
        k = np.random.default_rng(0).standard_normal((3, 2, 2, 3, 2))
        y = conv3d(np.zeros((4, 5, 6, 2)), k, b)
        assert y.shape == (4, 5, 6, 3)
        np.testing.assert_allclose(y, np.broadcast_to(b, y.shape), atol=1e-12)

    def test_identity_kernel(self):
        x = np.random.default_rng(1).standard_normal((3, 4, 5, 1))
        y = conv3d(x, np.ones((1, 1, 1, 1, 1)), np.zeros(1))
        np.testing.assert_allclose(y, x, atol=1e-12)

    def test_matches_direct_summation_example(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((4, 4, 5, 1))
        k = rng.standard_normal((2, 2, 2, 3, 1))
        b = rng.standard_normal(2)
        np.testing.assert_allclose(conv3d(x, k, b), direct_conv3d(x, k, b), atol=1e-10)

    @pytest.mark.parametrize("seed", range(100))
    def test_oracle_random_small(self, seed):
        rng = np.random.default_rng(1000 + seed)
        L, T, S = rng.integers(1, 7, size=3)
        C, K = rng.integers(1, 4, size=2)
        kL, kT, kS = (int(rng.integers(1, n + 1)) for n in (L, T, S))
        x = rng.standard_normal((L, T, S, C))
        k = rng.standard_normal((K, kL, kT, kS, C))
        b = rng.standard_normal(K)
        np.testing.assert_allclose(conv3d(x, k, b), direct_conv3d(x, k, b), atol=1e-6)

    def test_batched_equals_single(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((3, 4, 4, 6, 2))
        k = rng.standard_normal((2, 2, 2, 3, 2))
        b = rng.standard_normal(2)
        batched = conv3d(x, k, b)
        for i in range(3):
            np.testing.assert_allclose(batched[i], conv3d(x[i], k, b), atol=1e-12)

    def test_keeps_float32(self):
        x = np.ones((2, 2, 4, 1), np.float32)
        y = conv3d(x, np.ones((1, 1, 1, 2, 1), np.float32), np.zeros(1, np.float32))
        assert y.dtype == np.float32

    def test_errors(self):
        k = np.ones((1, 3, 1, 1, 1))
        with pytest.raises(DimensionError):
            conv3d(np.ones((2, 2, 2, 1)), k, np.zeros(1))
        with pytest.raises(DimensionError):
            conv3d(np.ones((2, 2, 2, 2)), np.ones((1, 1, 1, 1, 1)), np.zeros(1))
        bad = np.ones((2, 2, 2, 1))
        bad[0, 0, 0, 0] = np.nan
        with pytest.raises(NumericError):
            conv3d(bad, np.ones((1, 1, 1, 1, 1)), np.zeros(1))


class TestMaxPool:
    def test_unit_window_identity(self):
        x = np.random.default_rng(0).standard_normal((3, 3, 3, 2))
        np.testing.assert_array_equal(maxpool3d(x, (1, 1, 1)), x)

    def test_twice_pooled_shape(self):
        x = np.zeros((10, 10, 256, 4), np.float32)
        assert maxpool3d(maxpool3d(x, (2, 2, 2)), (2, 2, 2)).shape == (2, 2, 64, 4)

    def test_constant(self):
        y = maxpool3d(np.full((4, 5, 6, 1), 3.5), (2, 2, 3))
        assert y.shape == (2, 2, 2, 1)
        assert np.all(y == 3.5)

    def test_equals_window_max_by_enumeration(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((5, 4, 7, 2))
        w = (2, 2, 3)
        y = maxpool3d(x, w)
        for idx in np.ndindex(y.shape):
            l, t, s, c = idx
            win = x[l * 2:(l + 1) * 2, t * 2:(t + 1) * 2, s * 3:(s + 1) * 3, c]
            assert y[idx] == win.max()

    def test_tie_routes_to_first(self):
        x = np.ones((2, 2, 2, 1))
        g = maxpool3d_grad(np.ones((1, 1, 1, 1)), x, (2, 2, 2)).d_input
        expected = np.zeros_like(x)
        expected[0, 0, 0, 0] = 1.0
        np.testing.assert_array_equal(g, expected)

    def test_window_too_large(self):
        with pytest.raises(DimensionError):
            maxpool3d(np.ones((2, 2, 2, 1)), (3, 1, 1))


class TestDenseRelu:
    def test_identity(self):
        x = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(dense(x, np.eye(3), np.zeros(3)), x)

    def test_zero_weights(self):
        b = np.array([4.0, 5.0])
        np.testing.assert_array_equal(dense(np.ones(3), np.zeros((2, 3)), b), b)

    def test_scalar_dot_oracle(self):
        rng = np.random.default_rng(5)
        w, b, x = rng.standard_normal((3, 4)), rng.standard_normal(3), rng.standard_normal(4)
        expected = [sum(w[i, j] * x[j] for j in range(4)) + b[i] for i in range(3)]
        np.testing.assert_allclose(dense(x, w, b), expected, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            dense(np.ones(4), np.ones((3, 5)), np.zeros(3))

    def test_relu_values_and_kink(self):
        assert relu(np.array(-1.0)) == 0
        assert relu(np.array(2.5)) == 2.5
        assert relu_grad(np.array(1.0), np.array(0.0)).d_input == 0


class TestSoftmaxXent:
    def test_uniform(self):
        p, loss = softmax_xent(np.zeros(4), 2)
        np.testing.assert_allclose(p, 0.25)
        assert loss == pytest.approx(np.log(4))

    def test_stability(self):
        p, loss = softmax_xent(np.array([1000.0, 0.0]), 0)
        np.testing.assert_allclose(p, [1.0, 0.0], atol=1e-12)
        assert np.isfinite(loss)

    def test_gradient_is_p_minus_onehot(self):
        z = np.array([0.1, -0.3, 2.0])
        p, _ = softmax_xent(z, 1)
        np.testing.assert_allclose(softmax_xent_grad(p, 1), p - [0, 1, 0])

    def test_target_out_of_range(self):
        with pytest.raises(IndexError):
            softmax_xent(np.zeros(4), 4)

    @given(st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=8))
    def test_probabilities_normalised(self, logits):
        p, _ = softmax_xent(np.array(logits), 0)
        assert np.all(p >= 0)
        assert abs(p.sum() - 1.0) < 1e-6


class TestDropout:
    def test_p_zero_identity(self):
        x = np.arange(5.0)
        y, mask = dropout(x, 0.0, np.random.default_rng(0), True)
        np.testing.assert_array_equal(y, x)

    def test_inference_identity(self):
        x = np.arange(5.0)
        y, _ = dropout(x, 0.5, np.random.default_rng(0), False)
        np.testing.assert_array_equal(y, x)

    def test_zeroed_fraction(self):
        y, _ = dropout(np.ones(100_000), 0.5, np.random.default_rng(1), True)
        frac = np.mean(y == 0)
        assert abs(frac - 0.5) < 0.01
        assert set(np.unique(y)) == {0.0, 2.0}

    @pytest.mark.parametrize("p", [-0.1, 1.0])
    def test_bad_p(self, p):
        with pytest.raises(ParameterError):
            dropout(np.ones(3), p, np.random.default_rng(0), True)


class TestAdam:
    def test_zero_gradient(self):
        params = {"w": np.array([1.0, -2.0])}
        state = AdamState.for_params(params)
        adam_step(params, {"w": np.zeros(2)}, state)
        np.testing.assert_array_equal(params["w"], [1.0, -2.0])
        assert state.step_count == 1

    def test_first_step_magnitude_is_lr(self):
        # m_hat = g, v_hat = g^2 after one step, so |update| = lr * |g| / (|g| + eps)
        params = {"w": np.zeros(3)}
        state = AdamState.for_params(params)
        g = np.array([0.5, -3.0, 10.0])
        adam_step(params, {"w": g}, state)
        expected = -3e-3 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(params["w"], expected, rtol=1e-12)

    def test_non_finite_names_parameter(self):
        params = {"a": np.zeros(2), "b": np.zeros(2)}
        state = AdamState.for_params(params)
        with pytest.raises(NumericError, match="'b'"):
            adam_step(params, {"a": np.ones(2), "b": np.array([1.0, np.inf])}, state)
        assert state.step_count == 0
        np.testing.assert_array_equal(params["a"], 0)

    def test_deterministic(self):
        def run():
            rng = np.random.default_rng(9)
            params = {"w": rng.standard_normal(16).astype(np.float32)}
            state = AdamState.for_params(params)
            for _ in range(20):
                adam_step(params, {"w": rng.standard_normal(16).astype(np.float32)}, state)
            return params["w"]

        assert run().tobytes() == run().tobytes()


@pytest.mark.parametrize("layer", ["conv3d", "maxpool3d", "dense", "relu", "softmax_xent", "dropout"])
def test_gradient_check_layers(layer):
    assert gradient_check(layer) < 1e-4


def test_gradient_check_conv_asymmetric_kernel():
    err = gradient_check("conv3d", {"input": (3, 4, 8, 3), "kernels": (2, 3, 1, 4, 3)}, seed=3)
    assert err < 1e-4


def test_check_arrays_detects_wrong_gradient():
    err = check_arrays(lambda x: x ** 2, lambda d, x: [d * x], [np.array([1.0, 2.0])])
    assert err > 0.4
