"""Model files.

JSON (``.json``), float or quantized::

    {"format": "stflood-dqn", "version": 1, "kind": "float" | "quantized",
     "scale": 100,                       # quantized only
     "shapes": {"w1": [31, 30], "b1": [30], "w2": [30, 3], "b2": [3]},
     "w1": [...row-major...], "b1": [...], "w2": [...], "b2": [...]}

Binary (``.bin``), quantized only, little-endian, for integer-only targets::

    offset  size  field
    0       4     magic b"STQN"
    4       2     uint16 version (1)
    6       2     uint16 scale (100)
    8       2     uint16 n_in (31)
    10      2     uint16 n_hidden (30)
    12      2     uint16 n_out (3)
    14      ...   int16 w1[n_in][n_hidden], int16 b1[n_hidden],
                  int16 w2[n_hidden][n_out], int16 b2[n_out]

Inference on the target: acc = sum_i x_i * w[i][j] + b[j] * scale in int32,
then h_j = sign(acc) * ((|acc| + scale/2) / scale), ReLU between the layers.
With the default shapes the weight payload is 2106 bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from stflood.core import ValidationError
from stflood.dqn.model import MlpModel, QuantizedModel

FORMAT = "stflood-dqn"
VERSION = 1
MAGIC = b"STQN"
_HEADER = struct.Struct("<4sHHHHH")
_KEYS = ("w1", "b1", "w2", "b2")


class ModelFileError(ValidationError):
    pass


class CorruptModelError(ModelFileError):
    pass


class ModelVersionError(ModelFileError):
    pass


def model_to_dict(model: MlpModel | QuantizedModel) -> dict:
    quantized = isinstance(model, QuantizedModel)
    d = {"format": FORMAT, "version": VERSION, "kind": "quantized" if quantized else "float"}
    if quantized:
        d["scale"] = int(model.scale)
    d["shapes"] = {k: list(getattr(model, k).shape) for k in _KEYS}
    for k in _KEYS:
        arr = getattr(model, k)
        d[k] = [int(v) for v in arr.ravel()] if quantized else [float(v) for v in arr.ravel()]
    return d


def model_from_dict(d: dict) -> MlpModel | QuantizedModel:
    if not isinstance(d, dict) or d.get("format") != FORMAT:
        raise CorruptModelError("not a model file (format tag missing)")
    if d.get("version") != VERSION:
        raise ModelVersionError(f"unsupported model file version {d.get('version')!r}")
    try:
        arrays = {}
        for k in _KEYS:
            shape = tuple(d["shapes"][k])
            arrays[k] = np.asarray(d[k]).reshape(shape)
        if d["kind"] == "quantized":
            return QuantizedModel(scale=int(d["scale"]), **{k: v.astype(np.int64) for k, v in arrays.items()})
        if d["kind"] == "float":
            return MlpModel(**{k: v.astype(np.float64) for k, v in arrays.items()})
    except (KeyError, ValueError, TypeError) as exc:
        raise CorruptModelError(f"model file is inconsistent: {exc}") from None
    raise CorruptModelError(f"unknown model kind {d.get('kind')!r}")


def export_binary(qmodel: QuantizedModel) -> bytes:
    n_in, n_hidden = qmodel.w1.shape
    n_out = qmodel.w2.shape[1]
    head = _HEADER.pack(MAGIC, VERSION, qmodel.scale, n_in, n_hidden, n_out)
    body = b"".join(getattr(qmodel, k).astype("<i2").tobytes() for k in _KEYS)
    return head + body


def import_binary(blob: bytes) -> QuantizedModel:
    if len(blob) < _HEADER.size:
        raise CorruptModelError("truncated header")
    magic, version, scale, n_in, n_hidden, n_out = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CorruptModelError("bad magic")
    if version != VERSION:
        raise ModelVersionError(f"unsupported model file version {version}")
    shapes = {"w1": (n_in, n_hidden), "b1": (n_hidden,), "w2": (n_hidden, n_out), "b2": (n_out,)}
    need = _HEADER.size + 2 * sum(int(np.prod(s)) for s in shapes.values())
    if len(blob) != need:
        raise CorruptModelError(f"expected {need} bytes, got {len(blob)}")
    arrays, off = {}, _HEADER.size
    for k, shape in shapes.items():
        n = int(np.prod(shape))
        arrays[k] = np.frombuffer(blob, dtype="<i2", count=n, offset=off).astype(np.int64).reshape(shape)
        off += 2 * n
    return QuantizedModel(scale=scale, **arrays)


def save_model(model: MlpModel | QuantizedModel, path: str | Path) -> None:
    path = Path(path)
    if path.suffix == ".bin":
        if not isinstance(model, QuantizedModel):
            raise ModelFileError("binary export holds quantized models only")
        path.write_bytes(export_binary(model))
    else:
        path.write_text(json.dumps(model_to_dict(model)))


def load_model(path: str | Path) -> MlpModel | QuantizedModel:
    path = Path(path)
    if path.suffix == ".bin":
        return import_binary(path.read_bytes())
    try:
        d = json.loads(path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptModelError(f"{path}: corrupt model file ({exc})") from None
    return model_from_dict(d)
