"""Binary model container with a JSON metadata sidecar.

Layout, all little-endian::

    b"GECKO1"                 magic
    u8   kind                 0 = full precision, 1 = binarized
    u8   word_bits            bits per packed word (binary layers)
    u32  layer_count
    per layer:
      u8   type               0 = dense, 1 = binary
      u32  n_in, u32 n_out
      dense:  f32[n_in * n_out] weights (row-major), f32[n_out] bias
      binary: u<word_bits>[n_in * ceil(n_out / word_bits)] words (row-major), f32[n_out] bias

Parameters are stored as 32-bit floats, so a loaded model equals the
float32-rounded in-memory model and saving it again reproduces the file
byte for byte. Shadow weights of binarized models are training state and
are not stored; on load they are set to the +-1 signs of the bits.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from gecko.nn import DenseLayer, MlpModel
from gecko.quantize import BinarizedModel, BitLayer
from gecko.tensor import WORD_BITS, WORD_DTYPE, BitMatrix, words_per_row

MAGIC = b"GECKO1"
KIND_MLP, KIND_BINARIZED = 0, 1
LAYER_DENSE, LAYER_BINARY = 0, 1
_F32 = np.dtype("<f4")


class ModelFormatError(ValueError):
    pass


def _dense_bytes(layer: DenseLayer) -> bytes:
    return (
        struct.pack("<BII", LAYER_DENSE, layer.n_in, layer.n_out)
        + layer.weights.astype(_F32).tobytes()
        + layer.bias.astype(_F32).tobytes()
    )


def _binary_bytes(layer: BitLayer, bias: np.ndarray) -> bytes:
    return (
        struct.pack("<BII", LAYER_BINARY, layer.n_in, layer.n_out)
        + layer.weights.words.astype(WORD_DTYPE).tobytes()
        + bias.astype(_F32).tobytes()
    )


def dumps(model) -> bytes:
    if isinstance(model, MlpModel):
        body = [_dense_bytes(layer) for layer in model.layers]
        kind = KIND_MLP
    elif isinstance(model, BinarizedModel):
        body = [_dense_bytes(model.first_layer)]
        body += [_binary_bytes(l, b) for l, b in zip(model.hidden_bin_layers, model.hidden_biases)]
        body.append(_dense_bytes(model.last_layer))
        kind = KIND_BINARIZED
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return MAGIC + struct.pack("<BBI", kind, WORD_BITS, len(body)) + b"".join(body)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ModelFormatError(f"truncated model file: wanted {n} bytes at offset {self.pos}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def array(self, dtype: np.dtype, count: int) -> np.ndarray:
        return np.frombuffer(self.take(dtype.itemsize * count), dtype=dtype).copy()


def loads(buf: bytes):
    r = _Reader(buf)
    magic = r.take(len(MAGIC))
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    kind, word_bits, count = struct.unpack("<BBI", r.take(6))
    if word_bits != WORD_BITS:
        raise ModelFormatError(f"file uses {word_bits}-bit words; this build reads {WORD_BITS}-bit words")
    layers = []
    for _ in range(count):
        ltype, n_in, n_out = struct.unpack("<BII", r.take(9))
        if ltype == LAYER_DENSE:
            w = r.array(_F32, n_in * n_out).astype(np.float64).reshape(n_in, n_out)
            b = r.array(_F32, n_out).astype(np.float64).reshape(1, n_out)
            layers.append(DenseLayer(w, b))
        elif ltype == LAYER_BINARY:
            words = r.array(WORD_DTYPE, n_in * words_per_row(n_out)).reshape(n_in, -1)
            b = r.array(_F32, n_out).astype(np.float64).reshape(1, n_out)
            layers.append((BitLayer(BitMatrix(n_in, n_out, words)), b))
        else:
            raise ModelFormatError(f"unknown layer type {ltype}")
    if r.pos != len(buf):
        raise ModelFormatError(f"{len(buf) - r.pos} trailing bytes after last layer")
    if kind == KIND_MLP:
        if any(not isinstance(l, DenseLayer) for l in layers):
            raise ModelFormatError("full-precision model contains binary layers")
        return MlpModel(layers)
    if kind == KIND_BINARIZED:
        if len(layers) < 2 or not isinstance(layers[0], DenseLayer) or not isinstance(layers[-1], DenseLayer):
            raise ModelFormatError("binarized model must start and end with dense layers")
        hidden = layers[1:-1]
        if any(isinstance(h, DenseLayer) for h in hidden):
            raise ModelFormatError("binarized model has a dense layer in the hidden stack")
        return BinarizedModel(layers[0], [h[0] for h in hidden], [h[1] for h in hidden], layers[-1])
    raise ModelFormatError(f"unknown model kind {kind}")


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temporary file in the same directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def metadata(model) -> dict:
    meta = {
        "format": MAGIC.decode(),
        "kind": "binarized" if isinstance(model, BinarizedModel) else "full_precision",
        "architecture": model.sizes,
        "word_bits": WORD_BITS,
    }
    for key in ("seed", "epochs", "train_seed"):
        if key in model.meta:
            meta[key] = model.meta[key]
    return meta


def save_model(model, path) -> None:
    atomic_write(path, dumps(model))
    atomic_write(sidecar_path(path), json.dumps(metadata(model), indent=2, sort_keys=True) + "\n")


def load_model(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such model file: {path}")
    model = loads(path.read_bytes())
    side = sidecar_path(path)
    if side.exists():
        model.meta.update(json.loads(side.read_text()))
    return model
