import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gecko.data import make_splits, synth_blobs
from gecko.nn import DenseLayer, MlpModel, TrainConfig, evaluate, softmax
from gecko.quantize import (
    BinarizedModel,
    BitLayer,
    binarize,
    binary_forward,
    sign_bits,
    ste_train,
    xnor_dot,
    xnor_linear,
)
from gecko.tensor import OpCounter, pack_signs, unpack_signs

WIDTHS = [3, 8, 31, 32, 33, 64, 100]


def rand_signs(rng, shape):
    return rng.choice([-1.0, 1.0], size=shape)


def reference_forward(model, x):
    """Float re-implementation with unpacked +-1 weights and explicit sign()."""
    h = np.where(x @ model.first_layer.weights + model.first_layer.bias >= 0, 1.0, -1.0)
    for layer, bias in zip(model.hidden_bin_layers, model.hidden_biases):
        w = unpack_signs(layer.weights)
        h = np.where((h @ w) * (1.0 / np.sqrt(w.shape[0])) + bias >= 0, 1.0, -1.0)
    return softmax(h @ model.last_layer.weights + model.last_layer.bias)


def test_binarize_examples():
    np.testing.assert_array_equal(binarize([[0.5, -0.2, 0.0]]), [[1, -1, 1]])
    np.testing.assert_array_equal(binarize([[3.0, 0.1]]), [[1, 1]])
    np.testing.assert_array_equal(binarize([[0.2, 0.3]], threshold=0.25), [[-1, 1]])
    with pytest.raises(ValueError):
        binarize([[np.inf]])


def test_binarize_elementwise_oracle():
    t = np.random.default_rng(0).normal(size=(9, 13))
    out = binarize(t, 0.1)
    for i in range(9):
        for j in range(13):
            assert out[i, j] == (1.0 if t[i, j] >= 0.1 else -1.0)


def test_xnor_dot_examples():
    v = rand_signs(np.random.default_rng(1), (1, 8))
    x = pack_signs(v).words[0]
    assert xnor_dot(x, x, 8) == 8
    assert xnor_dot(x, pack_signs(-v).words[0], 8) == -8
    a = pack_signs([[1, -1, 1, -1]]).words[0]
    b = pack_signs([[1, 1, -1, -1]]).words[0]
    assert xnor_dot(a, b, 4) == 0


def test_xnor_dot_length_mismatch():
    with pytest.raises(ValueError):
        xnor_dot(np.zeros(2, np.uint64), np.zeros(1, np.uint64), 64)


@pytest.mark.parametrize("n", WIDTHS)
def test_xnor_linear_all_ones(n):
    layer = BitLayer.from_signs(np.ones((n, 1)))
    assert xnor_linear(pack_signs(np.ones((1, n))), layer)[0, 0] == n


@settings(max_examples=300, deadline=None)
@given(n=st.sampled_from(WIDTHS), rows=st.integers(1, 8), out=st.integers(1, 8), seed=st.integers(0, 2**32 - 1))
def test_xnor_linear_equals_float_gemm(n, rows, out, seed):
    rng = np.random.default_rng(seed)
    a, w = rand_signs(rng, (rows, n)), rand_signs(rng, (n, out))
    got = xnor_linear(pack_signs(a), BitLayer.from_signs(w))
    np.testing.assert_array_equal(got, a @ w)
    assert np.all(np.abs(got) <= n)
    assert np.all((got.astype(np.int64) - n) % 2 == 0)


def test_xnor_dot_agrees_with_xnor_linear():
    rng = np.random.default_rng(5)
    for n in WIDTHS:
        a, w = rand_signs(rng, (1, n)), rand_signs(rng, (n, 1))
        col = pack_signs(w.T).words[0]
        assert xnor_dot(pack_signs(a).words[0], col, n) == xnor_linear(pack_signs(a), BitLayer.from_signs(w))[0, 0]


def test_xnor_linear_dimension_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        xnor_linear(pack_signs(np.ones((1, 4))), BitLayer.from_signs(np.ones((5, 2))))


def test_xnor_linear_counts():
    c = OpCounter()
    xnor_linear(pack_signs(np.ones((3, 10))), BitLayer.from_signs(np.ones((10, 4))), c)
    assert (c.xnors, c.macs) == (3 * 10 * 4, 0)


def _hand_model():
    eye = DenseLayer(np.eye(4), np.zeros((1, 4)))
    pattern = 2 * np.eye(4) - 1  # +1 on the diagonal, -1 elsewhere
    return BinarizedModel(eye, [BitLayer.from_signs(pattern)], [np.zeros((1, 4))], eye.copy())


def test_binary_forward_hand_trace():
    # sign(x) = [+,-,+,-] sums to 0, so each unit sees 2*h_j; scaled by 1/2 it stays h_j
    p = binary_forward(_hand_model(), np.array([[1.0, -2.0, 3.0, -4.0]]))
    hi = 1 / (2 + 2 * math.exp(-2))
    lo = math.exp(-2) * hi
    np.testing.assert_allclose(p, [[hi, lo, hi, lo]], atol=1e-12)
    assert p.sum() == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(depth=st.integers(1, 4), width=st.sampled_from([5, 31, 33, 64]), seed=st.integers(0, 10_000))
def test_binary_forward_matches_reference(depth, width, seed):
    model = BinarizedModel.from_mlp(MlpModel.init([6] + [width] * depth + [3], seed))
    rng = np.random.default_rng(seed)
    for b in model.hidden_biases:
        b[:] = rng.normal(size=b.shape)
    x = rng.normal(size=(7, 6))
    got = binary_forward(model, x)
    np.testing.assert_array_equal(got, reference_forward(model, x))
    np.testing.assert_allclose(got.sum(axis=1), 1.0, atol=1e-6)


def test_binary_forward_repack_invariant():
    model = BinarizedModel.from_mlp(MlpModel.init([6, 40, 40, 40, 3], 2))
    repacked = model.copy()
    repacked.hidden_bin_layers = [BitLayer(pack_signs(unpack_signs(l.weights))) for l in model.hidden_bin_layers]
    x = np.random.default_rng(0).normal(size=(20, 6))
    np.testing.assert_array_equal(binary_forward(model, x), binary_forward(repacked, x))


def test_binary_forward_counters():
    model = BinarizedModel.from_mlp(MlpModel.init([6, 32, 16, 3], 0))
    c = OpCounter()
    binary_forward(model, np.zeros((2, 6)), c)
    assert c.macs == 2 * (6 * 32 + 16 * 3)
    assert c.xnors == 2 * 32 * 16


def test_binary_forward_dimension_error():
    with pytest.raises(ValueError, match="features"):
        binary_forward(_hand_model(), np.zeros((1, 3)))


def test_sign_bits_tie_maps_to_plus():
    np.testing.assert_array_equal(unpack_signs(sign_bits([[0.0, -1e-300, 2.0]])), [[1, -1, 1]])


def test_from_mlp_too_shallow():
    with pytest.raises(ValueError, match="too shallow"):
        BinarizedModel.from_mlp(MlpModel.init([4, 3], 0))
    with pytest.raises(ValueError, match="too shallow"):
        ste_train(MlpModel.init([4, 3], 0), synth_blobs(20, 4, 3, 0.1, 0), TrainConfig(epochs=1))


def test_single_hidden_layer_has_no_bit_layers():
    model = BinarizedModel.from_mlp(MlpModel.init([4, 8, 3], 0))
    assert model.hidden_bin_layers == [] and model.sizes == [4, 8, 3]
    x = np.random.default_rng(0).normal(size=(5, 4))
    np.testing.assert_array_equal(binary_forward(model, x), reference_forward(model, x))


def test_ste_lr_zero_keeps_init():
    init = MlpModel.init([4, 16, 16, 3], 3)
    model = ste_train(init, synth_blobs(60, 4, 3, 0.3, 0), TrainConfig(epochs=2, learning_rate=0.0))
    np.testing.assert_array_equal(model.shadow_weights[0], init.layers[1].weights)
    np.testing.assert_array_equal(model.hidden_bin_layers[0].signs(), binarize(init.layers[1].weights))
    np.testing.assert_array_equal(model.first_layer.weights, init.layers[0].weights)


def test_ste_bits_track_shadow_signs_every_step():
    steps = []

    def check(m):
        steps.append(1)
        for layer, shadow in zip(m.hidden_bin_layers, m.shadow_weights):
            np.testing.assert_array_equal(layer.signs(), binarize(shadow))
            assert np.all(np.abs(shadow) <= 1.0)

    ste_train(MlpModel.init([4, 12, 12, 3], 1), synth_blobs(90, 4, 3, 0.3, 0), TrainConfig(epochs=3, batch_size=16, learning_rate=0.5), check)
    assert len(steps) == 3 * math.ceil(90 / 16)


def test_ste_deterministic():
    ds = synth_blobs(100, 4, 3, 0.3, 0)
    cfg = TrainConfig(epochs=2, seed=4)
    a = ste_train(MlpModel.init([4, 12, 12, 3], 1), ds, cfg)
    b = ste_train(MlpModel.init([4, 12, 12, 3], 1), ds, cfg)
    assert a.hidden_bin_layers == b.hidden_bin_layers
    assert a.last_layer.weights.tobytes() == b.last_layer.weights.tobytes()


def test_ste_separable_blobs():
    ds = synth_blobs(1000, 10, 4, 0.1, 0)
    train, test = make_splits(ds, 0.5, 0).apply(ds)
    model = ste_train(MlpModel.init([10, 64, 64, 4], 0), train, TrainConfig())
    assert evaluate(model, test)[0] >= 0.90
