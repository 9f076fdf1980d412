"""Binary model files.

Layout: ``b"CSMD"``, uint16 format version, uint32 header length, a UTF-8
JSON header (family, spec, input shape, seed, loss trace, parameter names
and shapes), then every parameter as little-endian float64 in header order.
"""

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatVersionError, ParseError
from .core import TrainedModel
from .spec import ModelSpec

MAGIC = b"CSMD"
FORMAT_VERSION = 1


def dumps(model):
    header = {
        "family": model.family,
        "spec": model.spec.to_dict(),
        "input_shape": list(model.input_shape),
        "seed": model.seed,
        "loss_trace": list(model.loss_trace),
        "params": [[k, list(v.shape)] for k, v in model.params.items()],
    }
    hbytes = json.dumps(header).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in model.params.values())
    return MAGIC + struct.pack("<HI", FORMAT_VERSION, len(hbytes)) + hbytes + blob


def loads(data):
    if data[:4] != MAGIC:
        raise ParseError(0, "not a model file (bad magic)")
    if len(data) < 10:
        raise ParseError(4, "truncated model header")
    version, hlen = struct.unpack_from("<HI", data, 4)
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"model format version {version}, expected {FORMAT_VERSION}")
    try:
        header = json.loads(data[10:10 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(10, f"corrupt header: {exc}") from None
    spec = ModelSpec.from_dict(header["spec"])
    if spec.family != header["family"]:
        raise ParseError(10, "family tag does not match spec")
    pos = 10 + hlen
    params = {}
    for name, shape in header["params"]:
        n = int(np.prod(shape)) if shape else 1
        chunk = data[pos:pos + 8 * n]
        if len(chunk) != 8 * n:
            raise ParseError(pos, f"parameter {name} truncated")
        params[name] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
        pos += 8 * n
    if pos != len(data):
        raise ParseError(pos, "trailing bytes after parameter blob")
    shape = tuple(None if v is None else int(v) for v in header["input_shape"])
    return TrainedModel(spec, shape, params, header["seed"], tuple(header["loss_trace"]))


def save_model(model, path):
    Path(path).write_bytes(dumps(model))


def load_model(path):
    return loads(Path(path).read_bytes())
