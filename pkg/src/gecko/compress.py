"""Magnitude pruning, masked retraining and the threshold sweep."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from gecko.nn import MlpModel, TrainConfig, evaluate, fit
from gecko.privacy import audit_model


@dataclass(frozen=True)
class PruneConfig:
    tau: float
    retrain: bool = False
    retrain_cfg: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not self.tau >= 0:
            raise ValueError("tau must be non-negative")


@dataclass
class PruneMask:
    """Per-layer boolean arrays; True marks a weight held at zero."""

    layers: list[np.ndarray]

    def matches(self, model: MlpModel) -> bool:
        return len(self.layers) == len(model.layers) and all(
            m.shape == layer.weights.shape for m, layer in zip(self.layers, model.layers)
        )

    @property
    def sparsity(self) -> float:
        total = sum(m.size for m in self.layers)
        return sum(int(m.sum()) for m in self.layers) / total


def prune(model: MlpModel, tau: float) -> tuple[MlpModel, PruneMask, float]:
    """Zero every weight in ``[-tau, tau]``. Biases are left alone."""
    if not tau >= 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    pruned = model.copy()
    masks = []
    for layer in pruned.layers:
        m = np.abs(layer.weights) <= tau
        layer.weights[m] = 0.0
        masks.append(m)
    mask = PruneMask(masks)
    return pruned, mask, mask.sparsity


def retrain_pruned(model: MlpModel, mask: PruneMask, data, cfg: TrainConfig, on_epoch=None) -> MlpModel:
    """SGD with masked weights receiving zero gradient and staying exactly zero."""
    if not mask.matches(model):
        raise ValueError("mask shapes do not match model weights")
    return fit(model, data, cfg, mask=mask.layers, on_epoch=on_epoch)


@dataclass
class SweepPoint:
    tau: float
    sparsity: float
    train_acc: float
    test_acc: float
    gen_error: float
    attack_acc: float
    seed: int


SWEEP_FIELDS = ["tau", "sparsity", "train_acc", "test_acc", "gen_error", "attack_acc", "seed"]


def prune_sweep(model: MlpModel, data_splits, taus, retrain: bool, cfg: TrainConfig | None = None) -> list[SweepPoint]:
    """Prune ``model`` at each threshold (optionally retraining) and audit the result.

    ``data_splits`` is ``(train, test)``; the training split doubles as the
    member set and the test split as the non-member set.
    """
    taus = [float(t) for t in taus]
    if not taus:
        raise ValueError("empty tau list")
    if any(b < a for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be sorted ascending")
    cfg = cfg or TrainConfig()
    train, test = data_splits
    points = []
    for tau in taus:
        pruned, mask, sparsity = prune(model, tau)
        if retrain:
            pruned = retrain_pruned(pruned, mask, train, cfg)
        train_acc, _ = evaluate(pruned, train)
        test_acc, _ = evaluate(pruned, test)
        report = audit_model(pruned, train, test, seed=cfg.seed)
        points.append(SweepPoint(tau, sparsity, train_acc, test_acc, train_acc - test_acc, report.attack_accuracy, cfg.seed))
    return points


def sweep_to_csv(points: list[SweepPoint]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_FIELDS, lineterminator="\n")
    writer.writeheader()
    for p in points:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in asdict(p).items()})
    return buf.getvalue()


def std_scaled_taus(model: MlpModel, multipliers) -> list[float]:
    """Thresholds as multiples of the standard deviation of all weights."""
    std = float(np.concatenate([layer.weights.ravel() for layer in model.layers]).std())
    return [float(m) * std for m in multipliers]
