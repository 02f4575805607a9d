"""Teacher-student training of binarized students against full-precision posteriors."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from gecko.efficiency import measure
from gecko.nn import MlpModel, TrainConfig, cross_entropy, evaluate, sgd_train, softmax
from gecko.privacy import audit_model
from gecko.quantize import BinarizedModel, ste_fit, ste_train


@dataclass(frozen=True)
class DistillConfig:
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    use_soft_targets: bool = True

    def __post_init__(self):
        if not self.use_soft_targets:
            raise ValueError("only soft-target distillation is supported")


def distill_loss(student_pred, teacher_pred) -> float:
    """Cross-entropy of the student posteriors against the teacher's full posterior vectors."""
    return cross_entropy(student_pred, teacher_pred)


def distill_loss_grad(student_logits, teacher_pred) -> np.ndarray:
    """Gradient of :func:`distill_loss` with respect to the student's logits."""
    z = np.asarray(student_logits, dtype=np.float64)
    t = np.asarray(teacher_pred, dtype=np.float64)
    if z.shape != t.shape:
        raise ValueError(f"shape mismatch: logits {z.shape} vs teacher {t.shape}")
    return (t.sum(axis=1, keepdims=True) * softmax(z) - t) / z.shape[0]


def _teacher_fn(teacher):
    if hasattr(teacher, "predict_proba"):
        return teacher.predict_proba
    if callable(teacher):
        return teacher
    raise TypeError("teacher must be a model or a callable returning posteriors")


def distill_train(student_init: MlpModel, teacher, data, cfg: DistillConfig, on_step=None) -> BinarizedModel:
    """Straight-through training where the loss target is the teacher's posterior on each batch.

    True labels never enter the loss. ``teacher`` is a model (anything with
    ``predict_proba``) or a callable mapping a feature batch to posteriors;
    it is never updated.
    """
    predict = _teacher_fn(teacher)
    probe = np.asarray(predict(data.features[:1]))
    if probe.shape != (1, student_init.num_classes):
        raise ValueError(
            f"teacher outputs {probe.shape[-1]} classes, student outputs {student_init.num_classes}"
        )
    return ste_fit(student_init, data, cfg.train_cfg, lambda idx, xb: np.asarray(predict(xb), dtype=np.float64), on_step)


@dataclass
class ModelRow:
    name: str
    phase: str
    train_acc: float
    test_acc: float
    attack_acc: float
    gen_error: float
    memory_bytes: int


@dataclass
class GeckoReport:
    rows: list[ModelRow]
    meta: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict, repr=False)  # not serialized

    def row(self, phase: str) -> ModelRow:
        for r in self.rows:
            if r.phase == phase:
                return r
        raise KeyError(phase)

    def to_dict(self) -> dict:
        return {"meta": self.meta, "models": [asdict(r) for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def model_row(name: str, phase: str, model, train, test, seed: int) -> ModelRow:
    train_acc, _ = evaluate(model, train)
    test_acc, _ = evaluate(model, test)
    attack = audit_model(model, train, test, seed=seed)
    return ModelRow(name, phase, train_acc, test_acc, attack.attack_accuracy, train_acc - test_acc, measure(model).memory_bytes_actual)


def run_phase1_phase2(
    arch: list[int],
    teacher_arch: list[int],
    data_splits,
    cfgs: dict,
    seed: int = 0,
    teacher: MlpModel | None = None,
    standalone: BinarizedModel | None = None,
) -> GeckoReport:
    """Full-precision teacher, Phase I standalone binarized model, Phase II distilled student.

    ``arch`` and ``teacher_arch`` are hidden-layer widths. ``cfgs`` maps
    ``"teacher"``, ``"phase1"`` and ``"phase2"`` to :class:`TrainConfig`.
    A pre-trained ``teacher`` or Phase I ``standalone`` model may be passed
    to skip training it again.
    """
    train, test = data_splits
    d, c = train.dim, train.num_classes
    if teacher is None:
        teacher = sgd_train(MlpModel.init([d, *teacher_arch, c], seed), train, cfgs["teacher"])
    student_init = MlpModel.init([d, *arch, c], seed + 1)
    if standalone is None:
        standalone = ste_train(student_init, train, cfgs["phase1"])
    distilled = distill_train(student_init, teacher, train, DistillConfig(cfgs["phase2"]))
    rows = [
        model_row("teacher-fp" + _widths(teacher.sizes[1:-1]), "full_precision", teacher, train, test, seed),
        model_row("binary" + _widths(arch), "phase1_standalone", standalone, train, test, seed),
        model_row("binary" + _widths(arch), "phase2_distilled", distilled, train, test, seed),
    ]
    meta = {"arch": list(arch), "teacher_arch": list(teacher.sizes[1:-1]), "seed": seed}
    return GeckoReport(rows, meta, {"teacher": teacher, "standalone": standalone, "distilled": distilled})


def _widths(ws) -> str:
    return "[" + ",".join(str(w) for w in ws) + "]"
