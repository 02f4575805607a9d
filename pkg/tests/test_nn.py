import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gecko.data import LabeledDataset, synth_blobs
from gecko.nn import (
    DenseLayer,
    MlpModel,
    TrainConfig,
    backward,
    cross_entropy,
    evaluate,
    forward,
    one_hot,
    sgd_train,
)


def loss_of(model, x, target):
    return cross_entropy(forward(model, x), target)


def fd_gradients(model, x, target, h=1e-5):
    """Central finite differences of the mean cross-entropy, one coordinate at a time."""
    out = []
    for layer in model.layers:
        for arr in (layer.weights, layer.bias):
            g = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + h
                up = loss_of(model, x, target)
                arr[idx] = orig - h
                down = loss_of(model, x, target)
                arr[idx] = orig
                g[idx] = (up - down) / (2 * h)
            out.append(g)
    return out


def analytic(model, x, target):
    g = backward(model, x, target)
    out = []
    for gw, gb in zip(g.weights, g.biases):
        out += [gw, gb]
    return out


def max_rel_error(a, b, floor=1e-8):
    # coordinates where both gradients are below floor are compared absolutely
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def test_zero_model_gives_uniform_rows():
    model = MlpModel([DenseLayer(np.zeros((3, 4)), np.zeros((1, 4))), DenseLayer(np.zeros((4, 5)), np.zeros((1, 5)))])
    np.testing.assert_allclose(forward(model, np.random.default_rng(0).normal(size=(6, 3))), np.full((6, 5), 0.2))


def test_single_layer_softmax_hand_value():
    model = MlpModel([DenseLayer(np.eye(2), np.zeros((1, 2)))])
    p = forward(model, np.array([[1.0, 0.0]]))
    e = math.e
    np.testing.assert_allclose(p, [[e / (e + 1), 1 / (e + 1)]], atol=1e-12)
    np.testing.assert_allclose(p, [[0.7311, 0.2689]], atol=1e-4)


def test_forward_dimension_mismatch():
    model = MlpModel.init([3, 4, 2], 0)
    with pytest.raises(ValueError, match="features"):
        forward(model, np.ones((2, 5)))


def test_layer_chain_validated():
    with pytest.raises(ValueError, match="expects"):
        MlpModel([DenseLayer(np.zeros((3, 4)), np.zeros((1, 4))), DenseLayer(np.zeros((5, 2)), np.zeros((1, 2)))])


def test_cross_entropy_analytic_values():
    t = one_hot([0, 3, 9], 10)
    assert cross_entropy(t, t) <= 1e-11
    assert cross_entropy(np.full((3, 10), 0.1), t) == pytest.approx(math.log(10), abs=1e-9)


def test_cross_entropy_naive_oracle():
    rng = np.random.default_rng(3)
    p = rng.random((7, 5))
    p /= p.sum(1, keepdims=True)
    t = rng.random((7, 5))
    t /= t.sum(1, keepdims=True)
    total = 0.0
    for i in range(7):
        for c in range(5):
            total -= t[i, c] * math.log(max(p[i, c], 1e-12))
    assert cross_entropy(p, t) == pytest.approx(total / 7, abs=1e-10)


def test_cross_entropy_clamps_zero_probability():
    assert cross_entropy(np.array([[0.0, 1.0]]), np.array([[1.0, 0.0]])) == pytest.approx(-math.log(1e-12))


def test_cross_entropy_shape_mismatch():
    with pytest.raises(ValueError):
        cross_entropy(np.ones((2, 3)) / 3, np.ones((3, 3)) / 3)


def test_backward_small_net_matches_finite_differences():
    rng = np.random.default_rng(11)
    model = MlpModel.init([2, 8, 3], 4)
    for layer in model.layers:
        layer.bias[:] = rng.normal(scale=0.1, size=layer.bias.shape)
    x = rng.normal(size=(5, 2))
    t = one_hot(rng.integers(0, 3, 5), 3)
    for a, f in zip(analytic(model, x, t), fd_gradients(model, x, t)):
        assert max_rel_error(a, f) < 1e-4


def test_gradient_zero_at_loss_minimum():
    model = MlpModel.init([4, 6, 3], 2)
    x = np.random.default_rng(0).normal(size=(5, 4))
    target = forward(model, x)
    for g in analytic(model, x, target):
        assert np.max(np.abs(g)) <= 1e-8


def test_duplicated_batch_keeps_gradients():
    model = MlpModel.init([4, 6, 3], 2)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(5, 4))
    t = one_hot(rng.integers(0, 3, 5), 3)
    for a, b in zip(analytic(model, x, t), analytic(model, np.vstack([x, x]), np.vstack([t, t]))):
        np.testing.assert_allclose(a, b, atol=1e-10)


def _blobs():
    return synth_blobs(200, 4, 2, 0.05, 0)


def test_lr_zero_leaves_weights_untouched():
    model = MlpModel.init([4, 8, 2], 0)
    trained = sgd_train(model, _blobs(), TrainConfig(epochs=3, learning_rate=0.0))
    for a, b in zip(model.layers, trained.layers):
        np.testing.assert_array_equal(a.weights, b.weights)
        np.testing.assert_array_equal(a.bias, b.bias)


def test_single_sgd_step_matches_manual_update():
    model = MlpModel.init([3, 5, 2], 7)
    ds = LabeledDataset(np.array([[0.2, -0.4, 0.9]]), np.array([1]), 2)
    lr = 0.3
    trained = sgd_train(model, ds, TrainConfig(epochs=1, batch_size=1, learning_rate=lr))
    g = backward(model, ds.features, one_hot(ds.labels, 2))
    for k, layer in enumerate(model.layers):
        np.testing.assert_allclose(trained.layers[k].weights, layer.weights - lr * g.weights[k], atol=1e-15)
        np.testing.assert_allclose(trained.layers[k].bias, layer.bias - lr * g.biases[k], atol=1e-15)


def test_separable_blobs_reach_high_train_accuracy():
    ds = _blobs()
    model = sgd_train(MlpModel.init([4, 16, 2], 1), ds, TrainConfig(epochs=50, seed=1))
    assert evaluate(model, ds)[0] >= 0.99


def test_training_is_bit_reproducible():
    ds = synth_blobs(300, 5, 3, 0.4, 2)
    cfg = TrainConfig(epochs=5, seed=9)
    a = sgd_train(MlpModel.init([5, 8, 3], 9), ds, cfg)
    b = sgd_train(MlpModel.init([5, 8, 3], 9), ds, cfg)
    for la, lb in zip(a.layers, b.layers):
        assert la.weights.tobytes() == lb.weights.tobytes()
        assert la.bias.tobytes() == lb.bias.tobytes()


def test_sgd_rejects_bad_data():
    model = MlpModel.init([2, 3, 2], 0)
    with pytest.raises(ValueError, match="empty"):
        sgd_train(model, LabeledDataset(np.zeros((0, 2)), np.zeros(0), 2), TrainConfig())
    with pytest.raises(ValueError, match="classes"):
        sgd_train(model, LabeledDataset(np.zeros((1, 2)), np.array([2]), 3), TrainConfig())


def test_train_config_validation():
    for bad in (dict(epochs=0), dict(batch_size=0), dict(learning_rate=-1.0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


class _Fixed:
    def __init__(self, pred):
        self.pred = pred

    def predict_proba(self, x):
        return self.pred[: len(x)]


def test_evaluate_tie_break_and_perfect_predictions():
    ds = LabeledDataset(np.zeros((4, 2)), np.zeros(4, dtype=int), 3)
    acc, _ = evaluate(_Fixed(np.full((4, 3), 1 / 3)), ds)
    assert acc == 1.0
    labels = np.array([2, 0, 1, 2])
    ds = LabeledDataset(np.zeros((4, 2)), labels, 3)
    acc, loss = evaluate(_Fixed(one_hot(labels, 3)), ds)
    assert acc == 1.0 and loss <= 1e-11


def test_evaluate_random_model_is_chance():
    rng = np.random.default_rng(0)
    ds = LabeledDataset(rng.normal(size=(10_000, 8)), rng.integers(0, 10, 10_000), 10)
    acc, _ = evaluate(MlpModel.init([8, 16, 10], 3), ds)
    assert abs(acc - 0.10) <= 0.02


def test_evaluate_empty():
    with pytest.raises(ValueError):
        evaluate(MlpModel.init([2, 2], 0), LabeledDataset(np.zeros((0, 2)), np.zeros(0), 2))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_evaluate_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    ds = LabeledDataset(rng.normal(size=(40, 3)), rng.integers(0, 4, 40), 4)
    model = MlpModel.init([3, 5, 4], seed)
    perm = rng.permutation(40)
    a, la = evaluate(model, ds)
    b, lb = evaluate(model, ds.subset(perm))
    assert a == b
    assert la == pytest.approx(lb, abs=1e-12)
