"""Confidence-threshold membership inference and generalization-gap metrics.

The adversary sees only the posterior vector, takes its maximum, and calls
a record a member when that confidence is strictly above a threshold. The
reported attack accuracy is the best such threshold on the evaluation set
itself, over balanced member/non-member sets, so 0.5 is random guessing.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from gecko.tensor import SeededRng


@dataclass(frozen=True)
class AttackInput:
    member_confidences: np.ndarray
    nonmember_confidences: np.ndarray

    def __post_init__(self):
        for name in ("member_confidences", "nonmember_confidences"):
            v = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if v.size == 0:
                raise ValueError(f"{name} is empty")
            if not np.all((v >= 0.0) & (v <= 1.0)):
                raise ValueError(f"{name} must lie in [0, 1]")
            object.__setattr__(self, name, v)


@dataclass
class AttackReport:
    attack_accuracy: float
    best_threshold: float
    tpr: float
    fpr: float
    generalization_error: float | None = None
    n_members: int = 0
    n_nonmembers: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def max_posterior(pred) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim != 2 or pred.size == 0:
        raise ValueError("max_posterior needs a non-empty 2-D posterior matrix")
    return pred.max(axis=1)


def candidate_thresholds(values: np.ndarray) -> np.ndarray:
    """Distinct values plus midpoints between consecutive distinct values, ascending."""
    u = np.unique(values)
    mids = (u[:-1] + u[1:]) / 2.0
    return np.unique(np.concatenate([u, mids]))


def threshold_attack(inp: AttackInput) -> AttackReport:
    members = np.sort(inp.member_confidences)
    nonmembers = np.sort(inp.nonmember_confidences)
    cands = candidate_thresholds(np.concatenate([members, nonmembers]))
    # member predicted iff confidence > t
    true_pos = members.size - np.searchsorted(members, cands, side="right")
    true_neg = np.searchsorted(nonmembers, cands, side="right")
    correct = true_pos + true_neg
    best = int(np.argmax(correct))  # first maximum = lowest threshold
    total = members.size + nonmembers.size
    return AttackReport(
        attack_accuracy=float(correct[best] / total),
        best_threshold=float(cands[best]),
        tpr=float(true_pos[best] / members.size),
        fpr=float((nonmembers.size - true_neg[best]) / nonmembers.size),
        n_members=int(members.size),
        n_nonmembers=int(nonmembers.size),
    )


def balance(a: np.ndarray, b: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Subsample the larger array (seeded) so both sides have equal length."""
    if a.size == b.size:
        return a, b
    rng = SeededRng(seed)
    if a.size > b.size:
        return a[np.sort(rng.choice(a.size, b.size))], b
    return a, b[np.sort(rng.choice(b.size, a.size))]


def audit_model(model, train_split, test_split, seed: int = 0) -> AttackReport:
    """Attack ``model`` with its training split as members and test split as non-members."""
    if np.intersect1d(train_split.ids, test_split.ids).size:
        raise ValueError("train and test splits overlap")
    train_pred = model.predict_proba(train_split.features)
    test_pred = model.predict_proba(test_split.features)
    train_acc = float(np.mean(np.argmax(train_pred, axis=1) == train_split.labels))
    test_acc = float(np.mean(np.argmax(test_pred, axis=1) == test_split.labels))
    members, nonmembers = balance(max_posterior(train_pred), max_posterior(test_pred), seed)
    report = threshold_attack(AttackInput(members, nonmembers))
    report.generalization_error = train_acc - test_acc
    return report


def load_confidence_csv(path) -> AttackInput:
    """Read ``record_id,max_posterior,is_member`` rows (header optional)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    members, nonmembers = [], []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if lineno == 1 and row[0].strip() == "record_id":
                continue
            if len(row) != 3:
                raise ValueError(f"row {lineno}: expected 3 columns, got {len(row)}")
            try:
                conf = float(row[1])
            except ValueError:
                raise ValueError(f"row {lineno}: max_posterior {row[1]!r} is not a number") from None
            flag = row[2].strip().lower()
            if flag in ("1", "true", "member"):
                members.append(conf)
            elif flag in ("0", "false", "nonmember", "non-member"):
                nonmembers.append(conf)
            else:
                raise ValueError(f"row {lineno}: is_member must be 0/1, got {row[2]!r}")
    return AttackInput(np.array(members), np.array(nonmembers))
