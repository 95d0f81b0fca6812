"""Self-describing checkpoint container.

Layout: the magic ``b"LCBFCKPT"``, an 8-byte little-endian header length, a
UTF-8 JSON header, then raw little-endian float64 arrays in header order.
The header records the format version, method tag, network spec, every
array's name/shape/offset, the optimizer scalars and step counter, and the
state of the parameter-init RNG. Identical models serialize to identical
bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .adam import TrainState
from .network import NetworkSpec
from .train import Model

MAGIC = b"LCBFCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _arrays(model: Model):
    for k, v in model.params.items():
        yield "param/" + k, v
    for k in model.params:
        if k in model.opt.m:
            yield "adam_m/" + k, model.opt.m[k]
            yield "adam_v/" + k, model.opt.v[k]


def dumps(model: Model, method: str) -> bytes:
    entries, blobs, offset = [], [], 0
    for name, arr in _arrays(model):
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)), "offset": offset})
        blobs.append(data)
        offset += len(data)
    opt = model.opt
    header = {
        "format_version": FORMAT_VERSION,
        "method": method,
        "dtype": "<f8",
        "spec": {"n_features": model.spec.n_features, "n_out": model.spec.n_out,
                 "hidden": list(model.spec.hidden), "cell": model.spec.cell},
        "optimizer": {"lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2, "eps_adam": opt.eps_adam,
                      "loss_eps": opt.loss_eps, "step": opt.step},
        "rng_state": model.rng.bit_generator.state if model.rng is not None else None,
        "arrays": entries,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(head)) + head + b"".join(blobs)


def loads(data: bytes) -> tuple[Model, str]:
    if data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file")
    (n,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + n].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {header.get('format_version')}")
    body = memoryview(data)[16 + n:]
    arrays = {}
    for e in header["arrays"]:
        count = int(np.prod(e["shape"], dtype=int))
        arrays[e["name"]] = np.frombuffer(body, dtype="<f8", count=count,
                                          offset=e["offset"]).reshape(e["shape"]).astype(float)
    s = header["spec"]
    spec = NetworkSpec(s["n_features"], s["n_out"], tuple(s["hidden"]), s["cell"])
    o = header["optimizer"]
    opt = TrainState(lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"], eps_adam=o["eps_adam"],
                     loss_eps=o["loss_eps"], step=o["step"])
    params = {}
    for name, arr in arrays.items():
        kind, key = name.split("/", 1)
        if kind == "param":
            params[key] = arr
        elif kind == "adam_m":
            opt.m[key] = arr
        else:
            opt.v[key] = arr
    rng = None
    if header["rng_state"] is not None:
        rng = np.random.Generator(np.random.PCG64())
        rng.bit_generator.state = header["rng_state"]
    return Model(spec, params, opt, rng), header["method"]


def save(path, model: Model, method: str) -> None:
    Path(path).write_bytes(dumps(model, method))


def load(path) -> tuple[Model, str]:
    return loads(Path(path).read_bytes())
