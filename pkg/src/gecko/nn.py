"""Full-precision multilayer perceptrons trained with plain minibatch SGD."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gecko.tensor import OpCounter, SeededRng, as_matrix, matmul

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")


@dataclass
class DenseLayer:
    weights: np.ndarray  # in x out
    bias: np.ndarray  # 1 x out

    @property
    def n_in(self) -> int:
        return self.weights.shape[0]

    @property
    def n_out(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> DenseLayer:
        return DenseLayer(self.weights.copy(), self.bias.copy())


@dataclass
class MlpModel:
    """Stack of dense layers, rectifier between them, softmax on top."""

    layers: list[DenseLayer]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.layers:
            raise ValueError("model needs at least one layer")
        for k, layer in enumerate(self.layers):
            if layer.bias.shape != (1, layer.n_out):
                raise ValueError(f"layer {k}: bias shape {layer.bias.shape} != (1, {layer.n_out})")
            if k and self.layers[k - 1].n_out != layer.n_in:
                raise ValueError(
                    f"layer {k - 1} outputs {self.layers[k - 1].n_out} "
                    f"but layer {k} expects {layer.n_in}"
                )

    @classmethod
    def init(cls, sizes: list[int], seed: int) -> MlpModel:
        """Glorot-uniform weights and zero biases for layer widths ``sizes``.

        ``sizes`` includes input and output widths, e.g. ``[446, 512, 512, 30]``.
        """
        if len(sizes) < 2:
            raise ValueError("sizes must list at least input and output widths")
        rng = SeededRng(seed)
        layers = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (n_in + n_out))
            layers.append(DenseLayer(rng.uniform(-limit, limit, (n_in, n_out)), np.zeros((1, n_out))))
        return cls(layers, meta={"sizes": list(sizes), "seed": int(seed)})

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0].n_in] + [layer.n_out for layer in self.layers]

    @property
    def num_classes(self) -> int:
        return self.layers[-1].n_out

    def copy(self) -> MlpModel:
        return MlpModel([layer.copy() for layer in self.layers], dict(self.meta))

    def predict_proba(self, x, counter: OpCounter | None = None) -> np.ndarray:
        return forward(self, x, counter)


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _check_input(model: MlpModel, x) -> np.ndarray:
    x = as_matrix(x, "input")
    if x.shape[1] != model.layers[0].n_in:
        raise ValueError(f"input has {x.shape[1]} features, model expects {model.layers[0].n_in}")
    return x


def _forward_cache(model: MlpModel, x: np.ndarray, counter: OpCounter | None = None):
    pre, post = [], [x]
    h = x
    last = len(model.layers) - 1
    for k, layer in enumerate(model.layers):
        z = matmul(h, layer.weights, counter) + layer.bias
        pre.append(z)
        h = softmax(z) if k == last else relu(z)
        post.append(h)
    return pre, post


def forward(model: MlpModel, x, counter: OpCounter | None = None) -> np.ndarray:
    """Posterior matrix (n x C) for a batch of inputs."""
    x = _check_input(model, x)
    return _forward_cache(model, x, counter)[1][-1]


def cross_entropy(pred, target) -> float:
    """Mean over rows of ``-sum(target * log(pred))`` with ``log`` floored at 1e-12."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 2:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    logp = np.log(np.maximum(pred, LOG_FLOOR))
    return float(-(target * logp).sum(axis=1).mean())


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def backward(model: MlpModel, x, target) -> Gradients:
    """Gradient of the mean cross-entropy with respect to every weight and bias.

    ``target`` rows must sum to one (one-hot or soft), which makes the
    softmax/cross-entropy gradient at the logits ``(pred - target) / n``.
    """
    x = _check_input(model, x)
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (x.shape[0], model.num_classes):
        raise ValueError(f"target shape {target.shape} != ({x.shape[0]}, {model.num_classes})")
    pre, post = _forward_cache(model, x)
    return _backprop(model, pre, post, (post[-1] - target) / x.shape[0])


def _backprop(model: MlpModel, pre, post, delta: np.ndarray) -> Gradients:
    n_layers = len(model.layers)
    gw: list[np.ndarray] = [None] * n_layers
    gb: list[np.ndarray] = [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        gw[k] = post[k].T @ delta
        gb[k] = delta.sum(axis=0, keepdims=True)
        if k:
            delta = (delta @ model.layers[k].weights.T) * (pre[k - 1] > 0)
    return Gradients(gw, gb)


def check_dataset(model_classes: int, data) -> None:
    if data.n == 0:
        raise ValueError("dataset is empty")
    if data.num_classes != model_classes:
        raise ValueError(f"dataset has {data.num_classes} classes, model outputs {model_classes}")
    if data.labels.size and (data.labels.max() >= model_classes or data.labels.min() < 0):
        raise ValueError("label out of range for model output")


def minibatches(n: int, cfg: TrainConfig, rng: SeededRng):
    """Yield ``(epoch, index_batch)`` pairs for a seeded shuffled pass per epoch."""
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            yield epoch, order[start : start + cfg.batch_size]


def fit(model: MlpModel, data, cfg: TrainConfig, mask=None, on_epoch=None) -> MlpModel:
    """SGD on a copy of ``model``.

    ``mask`` is an optional list of boolean arrays (one per layer); masked
    weights get zero gradient and are held at exactly zero. ``on_epoch`` is
    called as ``on_epoch(epoch, model)`` after each epoch.
    """
    check_dataset(model.num_classes, data)
    model = model.copy()
    if mask is not None:
        keep = [~m for m in mask]
        for layer, m in zip(model.layers, mask):
            layer.weights[m] = 0.0
    rng = SeededRng(cfg.seed)
    targets = one_hot(data.labels, data.num_classes)
    lr = cfg.learning_rate
    epoch_seen = 0
    for epoch, idx in minibatches(data.n, cfg, rng):
        if epoch != epoch_seen and on_epoch is not None:
            on_epoch(epoch_seen, model)
        epoch_seen = epoch
        xb = data.features[idx]
        pre, post = _forward_cache(model, xb)
        grads = _backprop(model, pre, post, (post[-1] - targets[idx]) / len(idx))
        for k, layer in enumerate(model.layers):
            gw = grads.weights[k] if mask is None else grads.weights[k] * keep[k]
            layer.weights -= lr * gw
            layer.bias -= lr * grads.biases[k]
    if on_epoch is not None:
        on_epoch(epoch_seen, model)
    return model


def sgd_train(model: MlpModel, data, cfg: TrainConfig) -> MlpModel:
    """Train a copy of ``model`` with minibatch SGD; deterministic given ``cfg.seed``."""
    trained = fit(model, data, cfg)
    trained.meta.update({"epochs": cfg.epochs, "train_seed": cfg.seed})
    return trained


def evaluate(model, data) -> tuple[float, float]:
    """Return ``(accuracy, mean cross-entropy)``; argmax ties go to the lowest class."""
    if data.n == 0:
        raise ValueError("dataset is empty")
    pred = model.predict_proba(data.features)
    acc = float(np.mean(np.argmax(pred, axis=1) == data.labels))
    loss = cross_entropy(pred, one_hot(data.labels, pred.shape[1]))
    return acc, loss
