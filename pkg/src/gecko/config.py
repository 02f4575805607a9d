"""Experiment configuration files.

A config is a JSON object. Every section is validated up front and any key
not listed here is rejected, so typos fail before training starts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from gecko.data import LabeledDataset, load_csv, load_idx, make_splits, synth_blobs
from gecko.nn import TrainConfig
from gecko.tensor import SeededRng


class ConfigError(ValueError):
    pass


_DATASET_KEYS = {
    "synth": {"source", "n", "dim", "classes", "spread", "train_fraction"},
    "idx": {"source", "images", "labels", "classes", "train_size", "test_size"},
    "csv": {"source", "path", "classes", "train_size", "test_size"},
}
_TRAIN_KEYS = {"epochs", "batch_size", "learning_rate"}
_TOP_KEYS = {"dataset", "architecture", "train", "binarize", "prune", "distill", "seeds", "output_dir"}
_PRUNE_KEYS = {"taus", "tau_multipliers", "retrain_epochs"}
_DISTILL_KEYS = {"teacher_architecture", "teacher", "student"}


def _reject_unknown(section: str, d: dict, allowed: set) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{section} must be an object")
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(extra)}")


def _train_section(section: str, d: dict | None, base: TrainConfig) -> TrainConfig:
    if d is None:
        return base
    _reject_unknown(section, d, _TRAIN_KEYS)
    try:
        return replace(base, **d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def _widths(section: str, v) -> list[int]:
    if not isinstance(v, list) or not v or not all(isinstance(w, int) and w > 0 for w in v):
        raise ConfigError(f"{section} must be a non-empty list of positive integers")
    return list(v)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: dict
    architecture: list[int]
    train: TrainConfig = field(default_factory=TrainConfig)
    binarize: TrainConfig = field(default_factory=TrainConfig)
    taus: list[float] | None = None
    tau_multipliers: list[float] | None = None
    retrain: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=10))
    teacher_architecture: list[int] | None = None
    teacher: TrainConfig = field(default_factory=TrainConfig)
    student: TrainConfig = field(default_factory=TrainConfig)
    seeds: list[int] = field(default_factory=lambda: [0])
    output_dir: str = "runs"

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        _reject_unknown("config", d, _TOP_KEYS)
        if "dataset" not in d or "architecture" not in d:
            raise ConfigError("config needs 'dataset' and 'architecture'")
        ds = d["dataset"]
        if not isinstance(ds, dict) or ds.get("source") not in _DATASET_KEYS:
            raise ConfigError(f"dataset.source must be one of {sorted(_DATASET_KEYS)}")
        _reject_unknown("dataset", ds, _DATASET_KEYS[ds["source"]])
        if ds["source"] == "idx":
            for key in ("images", "labels"):
                if key not in ds:
                    raise ConfigError(f"dataset.{key} is required for idx datasets")
        if ds["source"] == "csv" and "path" not in ds:
            raise ConfigError("dataset.path is required for csv datasets")
        if ds["source"] == "csv" and "classes" not in ds:
            raise ConfigError("dataset.classes is required for csv datasets")

        train = _train_section("train", d.get("train"), TrainConfig())
        kwargs = dict(
            dataset=dict(ds),
            architecture=_widths("architecture", d["architecture"]),
            train=train,
            binarize=_train_section("binarize", d.get("binarize"), train),
        )
        prune = d.get("prune", {})
        _reject_unknown("prune", prune, _PRUNE_KEYS)
        if "taus" in prune and "tau_multipliers" in prune:
            raise ConfigError("prune: give either taus or tau_multipliers, not both")
        for key in ("taus", "tau_multipliers"):
            if key in prune:
                v = prune[key]
                if not isinstance(v, list) or not v or any(not isinstance(t, (int, float)) or t < 0 for t in v):
                    raise ConfigError(f"prune.{key} must be a non-empty list of non-negative numbers")
                if sorted(v) != v:
                    raise ConfigError(f"prune.{key} must be sorted ascending")
                kwargs[key] = [float(t) for t in v]
        if "retrain_epochs" in prune:
            kwargs["retrain"] = _train_section("prune", {"epochs": prune["retrain_epochs"]}, train)
        else:
            kwargs["retrain"] = replace(train, epochs=10)
        dist = d.get("distill", {})
        _reject_unknown("distill", dist, _DISTILL_KEYS)
        if "teacher_architecture" in dist:
            kwargs["teacher_architecture"] = _widths("distill.teacher_architecture", dist["teacher_architecture"])
        kwargs["teacher"] = _train_section("distill.teacher", dist.get("teacher"), train)
        kwargs["student"] = _train_section("distill.student", dist.get("student"), kwargs["binarize"])
        seeds = d.get("seeds", [0])
        if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
            raise ConfigError("seeds must be a non-empty list of integers")
        kwargs["seeds"] = list(seeds)
        if "output_dir" in d:
            if not isinstance(d["output_dir"], str):
                raise ConfigError("output_dir must be a string")
            kwargs["output_dir"] = d["output_dir"]
        return cls(**kwargs)

    def with_seed(self, seed: int) -> ExperimentConfig:
        return replace(self, seeds=[seed])

    def train_cfg(self, which: str, seed: int) -> TrainConfig:
        return replace(getattr(self, which), seed=seed)

    def load_splits(self, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
        """Build the (members, non-members) splits for ``seed``."""
        ds = self.dataset
        src = ds["source"]
        if src == "synth":
            data = synth_blobs(ds.get("n", 10000), ds.get("dim", 100), ds.get("classes", 10), ds.get("spread", 1.0), seed)
            return make_splits(data, ds.get("train_fraction", 0.5), seed).apply(data)
        if src == "idx":
            data = load_idx(ds["images"], ds["labels"], ds.get("classes", 10))
        else:
            data = load_csv(ds["path"], ds["classes"])
        n_train = ds.get("train_size", 5000)
        n_test = ds.get("test_size", n_train)
        if n_train + n_test > data.n:
            raise ConfigError(f"dataset has {data.n} rows, need train_size + test_size = {n_train + n_test}")
        order = SeededRng(seed).permutation(data.n)
        return data.subset(order[:n_train]), data.subset(order[n_train : n_train + n_test])

    def check_paths(self) -> None:
        for key in ("images", "labels", "path"):
            if key in self.dataset and not Path(self.dataset[key]).exists():
                raise FileNotFoundError(f"dataset.{key} not found: {self.dataset[key]}")


PRESETS = ("preset-prune", "preset-quant", "preset-gecko")


def load_config(name: str) -> ExperimentConfig:
    """Load a config from a file path or one of the bundled preset names."""
    if name in PRESETS:
        text = resources.files("gecko.presets").joinpath(f"{name}.json").read_text()
    else:
        path = Path(name)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{name}: invalid JSON ({exc})") from None
    return ExperimentConfig.from_dict(raw)
