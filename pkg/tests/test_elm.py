import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ser3d.elm import ElmModel, elm_predict, elm_train, functionals
from ser3d.errors import DataError, DimensionError, NumericError


def test_uniform_steps():
    f = functionals(np.full((10, 4), 0.25))
    np.testing.assert_allclose(f.reshape(4, 4), [[0.25, 0.25, 0.25, 1.0]] * 4)


def test_one_hot_class_zero():
    p = np.zeros((10, 4))
    p[:, 0] = 1
    f = functionals(p).reshape(4, 4)
    np.testing.assert_array_equal(f[0], [1, 1, 1, 1])
    np.testing.assert_array_equal(f[1:], 0)


def test_alternating_steps():
    p = np.array([[0.6, 0.4, 0, 0], [0.4, 0.6, 0, 0]] * 5)
    f = functionals(p).reshape(4, 4)
    np.testing.assert_allclose(f[0], [0.6, 0.4, 0.5, 1.0])
    np.testing.assert_allclose(f[1], [0.6, 0.4, 0.5, 1.0])
    np.testing.assert_allclose(f[2], [0, 0, 0, 0])


def test_threshold_is_strict():
    p = np.array([[0.2, 0.8], [0.5, 0.5]])
    assert functionals(p)[3] == 0.5  # 0.2 itself is not above 0.2


def test_batch_matches_single():
    rng = np.random.default_rng(0)
    p = rng.dirichlet(np.ones(4), size=(3, 10))
    batch = functionals(p)
    assert batch.shape == (3, 16)
    for i in range(3):
        np.testing.assert_array_equal(batch[i], functionals(p[i]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_step_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(4), size=10)
    np.testing.assert_allclose(functionals(p), functionals(p[rng.permutation(10)]), atol=1e-15)


@pytest.mark.parametrize("bad", [
    np.full((10, 4), 0.3),                       # rows sum to 1.2
    np.array([[1.5, -0.5, 0, 0]] * 10),          # negative entry
    np.array([[np.nan, 1, 0, 0]] * 10),
])
def test_non_probability_rows_rejected(bad):
    with pytest.raises(DataError):
        functionals(bad)


def test_bad_shape_rejected():
    with pytest.raises(DimensionError):
        functionals(np.full(4, 0.25))


def _separable(n=40, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    x = rng.normal(0, 0.3, (n, 5))
    x[:, 0] += np.where(y == 1, 2.0, -2.0)
    return x, y


def test_separable_toy_training_accuracy():
    x, y = _separable()
    m = elm_train(x, y, hidden=64, ridge=1e-3, seed=0)
    assert np.array_equal(elm_predict(m, x), y)
    assert all(elm_predict(m, xi) == yi for xi, yi in zip(x, y))


def test_huge_ridge_collapses_to_constant():
    x, y = _separable()
    m = elm_train(x, y, hidden=64, ridge=1e50, seed=0)
    assert not m.output_weights.any()
    assert np.all(elm_predict(m, x) == 0)


def test_same_seed_identical_model():
    x, y = _separable()
    a, b = elm_train(x, y, hidden=32, seed=4), elm_train(x, y, hidden=32, seed=4)
    for f in ("input_weights", "hidden_bias", "output_weights"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    c = elm_train(x, y, hidden=32, seed=5)
    assert not np.array_equal(a.input_weights, c.input_weights)


def test_weights_are_float32():
    x, y = _separable()
    m = elm_train(x, y, hidden=16)
    assert {a.dtype for a in (m.input_weights, m.hidden_bias, m.output_weights)} == {np.dtype("float32")}


def test_zero_feature_zero_weights_tie_to_class_zero():
    m = ElmModel(np.zeros((8, 16), np.float32), np.zeros(8, np.float32),
                 np.zeros((8, 4), np.float32), 1e-3)
    assert elm_predict(m, np.zeros(16)) == 0


def test_prediction_is_stateless():
    x, y = _separable()
    m = elm_train(x, y, hidden=32)
    before = elm_predict(m, x)
    with_dummy = elm_predict(m, np.vstack([x, np.full((1, 5), 9.0)]))
    assert np.array_equal(with_dummy[:-1], before)
    assert np.array_equal(elm_predict(m, x), before)


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 50), st.integers(0, 2**31 - 1))
def test_interpolation_when_hidden_exceeds_examples(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, (n, 16))
    y = rng.integers(0, 4, n)
    y[:4] = np.arange(4)
    m = elm_train(x, y, hidden=max(n, 64), ridge=1e-6, seed=seed)
    assert np.array_equal(elm_predict(m, x), y)


def test_length_mismatch():
    x, y = _separable()
    m = elm_train(x, y, hidden=16)
    with pytest.raises(DimensionError):
        elm_predict(m, np.zeros(6))


def test_missing_class_rejected():
    x, y = _separable()
    with pytest.raises(DataError):
        elm_train(x, y, n_classes=3)


def test_singular_system_raises():
    x = np.zeros((200, 4))
    y = np.arange(200) % 2
    with pytest.raises(NumericError, match="singular"):
        elm_train(x, y, hidden=256, ridge=0.0)


def test_ill_conditioning_retries_with_larger_ridge(caplog):
    x = np.zeros((20, 4))
    y = np.arange(20) % 2
    m = elm_train(x, y, hidden=64, ridge=0.0)
    assert m.ridge > 0
    assert "ill-conditioned" in caplog.text
