"""Dataset loading, synthesis and member/non-member splits."""

from __future__ import annotations

import csv
import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gecko.tensor import SeededRng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
GZIP_MAGIC = b"\x1f\x8b"


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix plus integer labels.

    ``ids`` records each row's index in the source dataset so that subsets
    taken from the same source can be checked for overlap.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise ValueError(f"features must be 2-D, got {features.shape}")
        if labels.shape != (features.shape[0],):
            raise ValueError(f"{labels.shape[0]} labels for {features.shape[0]} rows")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite values")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        ids = np.arange(labels.shape[0]) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if ids.shape != labels.shape:
            raise ValueError("ids must have one entry per row")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> LabeledDataset:
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[indices], self.labels[indices], self.num_classes, self.ids[indices])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class SplitSpec:
    train_indices: tuple[int, ...]
    test_indices: tuple[int, ...]
    seed: int

    def __post_init__(self):
        if set(self.train_indices) & set(self.test_indices):
            raise ValueError("train and test indices overlap")

    def apply(self, ds: LabeledDataset) -> tuple[LabeledDataset, LabeledDataset]:
        return ds.subset(self.train_indices), ds.subset(self.test_indices)

    def to_json(self) -> str:
        return json.dumps(
            {"seed": self.seed, "train_indices": list(self.train_indices), "test_indices": list(self.test_indices)}
        )

    @classmethod
    def from_json(cls, text: str) -> SplitSpec:
        d = json.loads(text)
        return cls(tuple(d["train_indices"]), tuple(d["test_indices"]), int(d["seed"]))


def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    raw = path.read_bytes()
    if raw[:2] == GZIP_MAGIC:
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, expected_magic: int, what: str) -> np.ndarray:
    if len(raw) < 4:
        raise DataFormatError(f"{what} file is too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise DataFormatError(f"bad {what} magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{what} file truncated inside the dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims))
    if len(raw) - header < count:
        raise DataFormatError(f"{what} payload truncated: expected {count} bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def load_idx(images_path, labels_path, num_classes: int = 10) -> LabeledDataset:
    """Load an IDX image/label pair (raw or gzip) as flattened features in [0, 1]."""
    images = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, "images")
    labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, "labels")
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(f"image count {images.shape[0]} != label count {labels.shape[0]}")
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    if labels.size and labels.max() >= num_classes:
        raise DataFormatError(f"label {int(labels.max())} out of range for {num_classes} classes")
    return LabeledDataset(features, labels.astype(np.int64), num_classes)


def load_csv(path, num_classes: int) -> LabeledDataset:
    """Load rows of ``label,f1,...,fd``. Feature width comes from the first row."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    labels, rows = [], []
    width = None
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise DataFormatError(f"row {lineno}: non-numeric cell ({exc})") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DataFormatError(f"row {lineno}: {len(values)} cells, expected {width}")
            label = values[0]
            if label != int(label) or not 0 <= label < num_classes:
                raise DataFormatError(f"row {lineno}: label {values[0]:g} out of range for {num_classes} classes")
            if not all(np.isfinite(values[1:])):
                raise DataFormatError(f"row {lineno}: non-finite feature")
            labels.append(int(label))
            rows.append(values[1:])
    if not rows:
        raise DataFormatError(f"{path} contains no data rows")
    if width < 2:
        raise DataFormatError("rows need a label and at least one feature")
    return LabeledDataset(np.array(rows), np.array(labels), num_classes)


def synth_blobs(n: int, d: int, num_classes: int, spread: float, seed: int) -> LabeledDataset:
    """Gaussian clusters around seeded centres in the unit cube, balanced within one per class."""
    if num_classes < 1 or n < num_classes or d < 1:
        raise ValueError("need n >= num_classes >= 1 and d >= 1")
    if spread < 0:
        raise ValueError("spread must be non-negative")
    rng = SeededRng(seed)
    centers = rng.uniform(0.0, 1.0, (num_classes, d))
    labels = np.arange(n) % num_classes
    labels = labels[rng.permutation(n)]
    noise = rng.normal(0.0, 1.0, (n, d))
    return LabeledDataset(centers[labels] + spread * noise, labels, num_classes)


def make_splits(ds: LabeledDataset, train_fraction: float, seed: int) -> SplitSpec:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be strictly between 0 and 1")
    n_train = int(round(ds.n * train_fraction))
    if n_train == 0 or n_train == ds.n:
        raise ValueError(f"train_fraction {train_fraction} leaves one side empty for n={ds.n}")
    order = SeededRng(seed).permutation(ds.n)
    return SplitSpec(tuple(int(i) for i in order[:n_train]), tuple(int(i) for i in order[n_train:]), seed)
