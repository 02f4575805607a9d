"""Binarized inference with XNOR/popcount kernels and straight-through training.

The first and last layers of a :class:`BinarizedModel` stay in full
precision. Every layer in between holds only sign bits; its input is the
binarized output of the layer below and its output is the integer
``+-1`` dot product, computed as ``n - 2 * popcount(x XOR w)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from gecko.nn import DenseLayer, MlpModel, TrainConfig, check_dataset, minibatches, one_hot, softmax
from gecko.tensor import (
    WORD_BITS,
    BitMatrix,
    OpCounter,
    SeededRng,
    as_matrix,
    matmul,
    pack_signs,
    unpack_signs,
    words_per_row,
)

# uint64 elements per chunk of the broadcast XOR in xnor_linear
_CHUNK_ELEMS = 1 << 22


def binarize(t, threshold: float = 0.0) -> np.ndarray:
    """Map entries ``>= threshold`` to +1 and the rest to -1."""
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise ValueError("binarize: non-finite input")
    return np.where(t >= threshold, 1.0, -1.0)


def sign_bits(t, threshold: float = 0.0) -> BitMatrix:
    """Binarize a real matrix straight to packed bits."""
    t = as_matrix(t, "activation")
    bits = t >= threshold
    return pack_signs(np.where(bits, 1.0, -1.0))


def _valid_mask(n: int) -> np.ndarray:
    mask = np.full(words_per_row(n), np.uint64(0xFFFFFFFFFFFFFFFF), dtype=np.uint64)
    if n % WORD_BITS:
        mask[-1] = np.uint64((1 << (n % WORD_BITS)) - 1)
    return mask


def xnor_dot(x: np.ndarray, w: np.ndarray, n: int) -> int:
    """``+-1`` dot product of two packed vectors of logical length ``n``.

    Parameters
    ----------
    x, w : np.ndarray
        Packed word vectors, ``words_per_row(n)`` uint64 words each.
    n : int
        Number of logical elements.

    Returns
    -------
    int
        ``2 * popcount(xnor(x, w)) - n``, i.e. agreements minus disagreements.
    """
    x = np.asarray(x, dtype=np.uint64).ravel()
    w = np.asarray(w, dtype=np.uint64).ravel()
    nw = words_per_row(n)
    if x.shape != (nw,) or w.shape != (nw,):
        raise ValueError(f"length mismatch: expected {nw} words for n={n}, got {x.size} and {w.size}")
    agree = ~(x ^ w) & _valid_mask(n)
    return 2 * int(np.bitwise_count(agree).sum()) - n


@dataclass(frozen=True, eq=False)
class BitLayer:
    """Binary weight matrix (``n_in`` x ``n_out``) with a column-packed copy for the kernel."""

    weights: BitMatrix
    _cols: BitMatrix = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_cols", self.weights.transpose())

    @classmethod
    def from_signs(cls, signs) -> BitLayer:
        return cls(pack_signs(signs))

    @property
    def n_in(self) -> int:
        return self.weights.rows

    @property
    def n_out(self) -> int:
        return self.weights.cols

    @property
    def scale(self) -> float:
        """Fixed positive rescaling applied to the integer pre-activation."""
        return 1.0 / np.sqrt(self.n_in)

    def signs(self) -> np.ndarray:
        return unpack_signs(self.weights)

    def __eq__(self, other):
        if not isinstance(other, BitLayer):
            return NotImplemented
        return self.weights == other.weights

    __hash__ = None


def xnor_linear(a: BitMatrix, layer: BitLayer, counter: OpCounter | None = None) -> np.ndarray:
    """Exact product ``unpack(a) @ unpack(layer.weights)`` via XOR and popcount."""
    n = layer.n_in
    if a.cols != n:
        raise ValueError(f"dimension mismatch: activations have {a.cols} columns, layer expects {n}")
    cols = layer._cols.words
    nw = cols.shape[1]
    out = np.empty((a.rows, layer.n_out), dtype=np.int64)
    step = max(1, _CHUNK_ELEMS // max(1, layer.n_out * nw))
    for r0 in range(0, a.rows, step):
        x = a.words[r0 : r0 + step]
        diff = np.bitwise_count(x[:, None, :] ^ cols[None, :, :]).sum(axis=2, dtype=np.int64)
        out[r0 : r0 + step] = n - 2 * diff
    if counter is not None:
        counter.xnors += a.rows * n * layer.n_out
    return out.astype(np.float64)


@dataclass
class BinarizedModel:
    """Full-precision first/last layers around a stack of binary layers.

    ``hidden_biases`` are kept in full precision. ``shadow_weights`` are the
    real-valued latent weights used during training; the deployed bits are
    their signs (zero maps to +1).
    """

    first_layer: DenseLayer
    hidden_bin_layers: list[BitLayer]
    hidden_biases: list[np.ndarray]
    last_layer: DenseLayer
    shadow_weights: list[np.ndarray] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        widths = [self.first_layer.n_out]
        for layer, bias in zip(self.hidden_bin_layers, self.hidden_biases):
            if layer.n_in != widths[-1]:
                raise ValueError(f"binary layer expects {layer.n_in} inputs, previous layer gives {widths[-1]}")
            if bias.shape != (1, layer.n_out):
                raise ValueError(f"hidden bias shape {bias.shape} != (1, {layer.n_out})")
            widths.append(layer.n_out)
        if len(self.hidden_biases) != len(self.hidden_bin_layers):
            raise ValueError("one hidden bias per binary layer required")
        if self.last_layer.n_in != widths[-1]:
            raise ValueError(f"last layer expects {self.last_layer.n_in} inputs, previous layer gives {widths[-1]}")
        if self.shadow_weights is None:
            self.shadow_weights = [layer.signs() for layer in self.hidden_bin_layers]

    @classmethod
    def from_mlp(cls, model: MlpModel) -> BinarizedModel:
        """Binarize the hidden-to-hidden weights of ``model``; keep first and last layers."""
        if len(model.layers) < 2:
            raise ValueError("architecture too shallow: need at least one hidden layer")
        hidden = model.layers[1:-1]
        shadow = [layer.weights.copy() for layer in hidden]
        return cls(
            model.layers[0].copy(),
            [BitLayer.from_signs(binarize(w)) for w in shadow],
            [layer.bias.copy() for layer in hidden],
            model.layers[-1].copy(),
            shadow,
            meta=dict(model.meta),
        )

    @property
    def sizes(self) -> list[int]:
        return [self.first_layer.n_in, self.first_layer.n_out] + [b.n_out for b in self.hidden_bin_layers] + [
            self.last_layer.n_out
        ]

    @property
    def num_classes(self) -> int:
        return self.last_layer.n_out

    def copy(self) -> BinarizedModel:
        return BinarizedModel(
            self.first_layer.copy(),
            list(self.hidden_bin_layers),
            [b.copy() for b in self.hidden_biases],
            self.last_layer.copy(),
            [s.copy() for s in self.shadow_weights],
            dict(self.meta),
        )

    def predict_proba(self, x, counter: OpCounter | None = None) -> np.ndarray:
        return binary_forward(self, x, counter)


def binary_forward(model: BinarizedModel, x, counter: OpCounter | None = None) -> np.ndarray:
    """Inference with XNOR kernels on every binary layer; returns posteriors."""
    x = as_matrix(x, "input")
    if x.shape[1] != model.first_layer.n_in:
        raise ValueError(f"input has {x.shape[1]} features, model expects {model.first_layer.n_in}")
    z = matmul(x, model.first_layer.weights, counter) + model.first_layer.bias
    act = sign_bits(z)
    for layer, bias in zip(model.hidden_bin_layers, model.hidden_biases):
        z = xnor_linear(act, layer, counter) * layer.scale + bias
        act = sign_bits(z)
    logits = matmul(unpack_signs(act), model.last_layer.weights, counter) + model.last_layer.bias
    return softmax(logits)


def _ste_forward(params, x):
    w0, b0, shadows, biases, wl, bl = params
    z0 = x @ w0 + b0
    hs = [binarize(z0)]
    zs = [z0]
    wbs = []
    for s, b in zip(shadows, biases):
        wb = binarize(s)
        wbs.append(wb)
        z = (hs[-1] @ wb) * (1.0 / np.sqrt(s.shape[0])) + b
        zs.append(z)
        hs.append(binarize(z))
    p = softmax(hs[-1] @ wl + bl)
    return zs, hs, wbs, p


def ste_fit(
    init: MlpModel,
    data,
    cfg: TrainConfig,
    targets_for: Callable[[np.ndarray, np.ndarray], np.ndarray],
    on_step: Callable[[BinarizedModel], None] | None = None,
) -> BinarizedModel:
    """Straight-through training loop shared by standalone and distilled students.

    ``targets_for(indices, x_batch)`` returns the target distribution for a
    batch. Binarization passes gradient through where ``|input| <= 1``;
    shadow weights are clipped to ``[-1, 1]`` after every step.
    """
    if len(init.layers) < 2:
        raise ValueError("architecture too shallow: need at least one hidden layer")
    check_dataset(init.num_classes, data)
    start = BinarizedModel.from_mlp(init)
    w0, b0 = start.first_layer.weights.copy(), start.first_layer.bias.copy()
    wl, bl = start.last_layer.weights.copy(), start.last_layer.bias.copy()
    shadows = [s.copy() for s in start.shadow_weights]
    biases = [b.copy() for b in start.hidden_biases]
    scales = [layer.scale for layer in start.hidden_bin_layers]
    lr = cfg.learning_rate
    rng = SeededRng(cfg.seed)

    def snapshot() -> BinarizedModel:
        return BinarizedModel(
            DenseLayer(w0.copy(), b0.copy()),
            [BitLayer.from_signs(binarize(s)) for s in shadows],
            [b.copy() for b in biases],
            DenseLayer(wl.copy(), bl.copy()),
            [s.copy() for s in shadows],
            dict(init.meta),
        )

    for _, idx in minibatches(data.n, cfg, rng):
        xb = data.features[idx]
        zs, hs, wbs, p = _ste_forward((w0, b0, shadows, biases, wl, bl), xb)
        delta = (p - targets_for(idx, xb)) / len(idx)
        g_wl = hs[-1].T @ delta
        g_bl = delta.sum(axis=0, keepdims=True)
        dh = delta @ wl.T
        g_shadow, g_bias = [None] * len(shadows), [None] * len(shadows)
        for k in range(len(shadows) - 1, -1, -1):
            dz = dh * (np.abs(zs[k + 1]) <= 1.0)
            g_shadow[k] = scales[k] * (hs[k].T @ dz) * (np.abs(shadows[k]) <= 1.0)
            g_bias[k] = dz.sum(axis=0, keepdims=True)
            dh = scales[k] * (dz @ wbs[k].T)
        dz0 = dh * (np.abs(zs[0]) <= 1.0)
        g_w0 = xb.T @ dz0
        g_b0 = dz0.sum(axis=0, keepdims=True)

        w0 -= lr * g_w0
        b0 -= lr * g_b0
        wl -= lr * g_wl
        bl -= lr * g_bl
        for k in range(len(shadows)):
            shadows[k] -= lr * g_shadow[k]
            np.clip(shadows[k], -1.0, 1.0, out=shadows[k])
            biases[k] -= lr * g_bias[k]
        if on_step is not None:
            on_step(snapshot())

    model = snapshot()
    model.meta.update({"epochs": cfg.epochs, "train_seed": cfg.seed})
    return model


def ste_train(init: MlpModel, data, cfg: TrainConfig, on_step=None) -> BinarizedModel:
    """Train a binarized model from ``init`` against the one-hot labels of ``data``."""
    targets = one_hot(data.labels, data.num_classes)
    return ste_fit(init, data, cfg, lambda idx, xb: targets[idx], on_step)
