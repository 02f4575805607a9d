"""Static memory footprint and per-inference operation counts.

Counts are derived twice: analytically from layer shapes, and from the
:class:`~gecko.tensor.OpCounter` filled by an actual single-sample forward
pass. :func:`measure` refuses to report if the two disagree.

Memory accesses are counted in 32-bit words: one read per stored parameter
word, one read of each layer input and one write of each layer output,
where binarized activations occupy one bit each.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from gecko.nn import MlpModel
from gecko.quantize import BinarizedModel
from gecko.tensor import OpCounter

FP_BYTES = 4


@dataclass
class LayerCost:
    name: str
    kind: str  # "dense" or "binary"
    n_in: int
    n_out: int
    weight_bytes_fp: int
    weight_bytes_actual: int
    bias_bytes: int
    macs: int
    xnors: int


@dataclass
class EfficiencyReport:
    param_count: int
    memory_bytes_fp: int
    memory_bytes_actual: int
    packing_ratio: float
    mac_count: int
    xnor_count: int
    mem_access_estimate: int
    layers: list[LayerCost] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _words32(n_bits: int) -> int:
    return -(-n_bits // 32)


def layer_costs(model) -> list[LayerCost]:
    costs = []
    if isinstance(model, MlpModel):
        for k, layer in enumerate(model.layers):
            w = layer.n_in * layer.n_out
            costs.append(LayerCost(f"dense{k}", "dense", layer.n_in, layer.n_out, FP_BYTES * w, FP_BYTES * w,
                                   FP_BYTES * layer.n_out, w, 0))
    elif isinstance(model, BinarizedModel):
        first, last = model.first_layer, model.last_layer
        costs.append(LayerCost("dense0", "dense", first.n_in, first.n_out, FP_BYTES * first.n_in * first.n_out,
                               FP_BYTES * first.n_in * first.n_out, FP_BYTES * first.n_out,
                               first.n_in * first.n_out, 0))
        for k, layer in enumerate(model.hidden_bin_layers, start=1):
            w = layer.n_in * layer.n_out
            costs.append(LayerCost(f"binary{k}", "binary", layer.n_in, layer.n_out, FP_BYTES * w,
                                   layer.weights.nbytes, FP_BYTES * layer.n_out, 0, w))
        k = len(model.hidden_bin_layers) + 1
        costs.append(LayerCost(f"dense{k}", "dense", last.n_in, last.n_out, FP_BYTES * last.n_in * last.n_out,
                               FP_BYTES * last.n_in * last.n_out, FP_BYTES * last.n_out,
                               last.n_in * last.n_out, 0))
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")
    return costs


def _activation_accesses(model) -> int:
    if isinstance(model, MlpModel):
        return sum(layer.n_in + layer.n_out for layer in model.layers)
    # real input and first-layer output; then one bit per binarized activation
    first = model.first_layer
    total = first.n_in + first.n_out
    for layer in model.hidden_bin_layers:
        total += _words32(layer.n_in) + layer.n_out
    last = model.last_layer
    return total + _words32(last.n_in) + last.n_out


def measure(model) -> EfficiencyReport:
    costs = layer_costs(model)
    counter = OpCounter()
    model.predict_proba(np.zeros((1, costs[0].n_in)), counter)
    macs = sum(c.macs for c in costs)
    xnors = sum(c.xnors for c in costs)
    if (counter.macs, counter.xnors) != (macs, xnors):
        raise RuntimeError(
            f"runtime counters ({counter.macs} MACs, {counter.xnors} XNORs) disagree with "
            f"analytic counts ({macs}, {xnors})"
        )
    params = sum(c.n_in * c.n_out + c.n_out for c in costs)
    fp = sum(c.weight_bytes_fp + c.bias_bytes for c in costs)
    actual = sum(c.weight_bytes_actual + c.bias_bytes for c in costs)
    return EfficiencyReport(
        param_count=params,
        memory_bytes_fp=fp,
        memory_bytes_actual=actual,
        packing_ratio=fp / actual,
        mac_count=macs,
        xnor_count=xnors,
        mem_access_estimate=actual // 4 + _activation_accesses(model),
        layers=costs,
    )


REPORT_KEYS = ["name", "param_count", "memory_bytes_fp", "memory_bytes_actual", "packing_ratio",
               "mac_count", "xnor_count", "mem_access_estimate"]


def compare(models: list, names: list[str] | None = None) -> list[dict]:
    """One row per model with its report plus ratios against the first model."""
    if not models:
        raise ValueError("compare needs at least one model")
    names = names or [f"model{i}" for i in range(len(models))]
    reports = [measure(m) for m in models]
    base = reports[0]
    rows = []
    for name, rep in zip(names, reports):
        row = {"name": name}
        row.update({k: getattr(rep, k) for k in REPORT_KEYS[1:]})
        row["memory_ratio_vs_first"] = base.memory_bytes_actual / rep.memory_bytes_actual
        row["mac_ratio_vs_first"] = base.mac_count / rep.mac_count if rep.mac_count else float("inf")
        row["mem_access_ratio_vs_first"] = base.mem_access_estimate / rep.mem_access_estimate
        rows.append(row)
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
