"""Binarized neural networks, pruning, distillation and membership-inference auditing."""

from gecko.compress import PruneConfig, PruneMask, SweepPoint, prune, prune_sweep, retrain_pruned
from gecko.data import LabeledDataset, SplitSpec, load_csv, load_idx, make_splits, synth_blobs
from gecko.distill import DistillConfig, GeckoReport, distill_loss, distill_train, run_phase1_phase2
from gecko.efficiency import EfficiencyReport, compare, measure
from gecko.nn import DenseLayer, MlpModel, TrainConfig, backward, cross_entropy, evaluate, forward, sgd_train
from gecko.privacy import AttackInput, AttackReport, audit_model, max_posterior, threshold_attack
from gecko.quantize import (
    BinarizedModel,
    BitLayer,
    binarize,
    binary_forward,
    ste_train,
    xnor_dot,
    xnor_linear,
)
from gecko.serialize import load_model, save_model
from gecko.tensor import WORD_BITS, BitMatrix, OpCounter, SeededRng, matmul, pack_signs, unpack_signs

__all__ = [
    "PruneConfig",
    "PruneMask",
    "SweepPoint",
    "prune",
    "prune_sweep",
    "retrain_pruned",
    "LabeledDataset",
    "SplitSpec",
    "load_csv",
    "load_idx",
    "make_splits",
    "synth_blobs",
    "DistillConfig",
    "GeckoReport",
    "distill_loss",
    "distill_train",
    "run_phase1_phase2",
    "EfficiencyReport",
    "compare",
    "measure",
    "DenseLayer",
    "MlpModel",
    "TrainConfig",
    "backward",
    "cross_entropy",
    "evaluate",
    "forward",
    "sgd_train",
    "AttackInput",
    "AttackReport",
    "audit_model",
    "max_posterior",
    "threshold_attack",
    "BinarizedModel",
    "BitLayer",
    "binarize",
    "binary_forward",
    "ste_train",
    "xnor_dot",
    "xnor_linear",
    "load_model",
    "save_model",
    "WORD_BITS",
    "BitMatrix",
    "OpCounter",
    "SeededRng",
    "matmul",
    "pack_signs",
    "unpack_signs",
]

__version__ = "0.1.0"
