"""Binary checkpoint container: layer manifest plus parameter payload.

Layout (little-endian throughout):

    magic  b"NETC"
    u32    version (1)
    u32    manifest length in bytes
    bytes  manifest: JSON list of layer descriptors (utf-8)
    u32    array count
    per array:
        u8     dtype code (0 = f64 values, 1 = u8 mask bits, 2 = absent mask)
        u8     ndim
        u32*   dims
        bytes  payload (f64 or u8; empty for absent masks)

Arrays appear in a fixed order: every parameter value, then every parameter
mask slot, then every buffer (batchnorm running statistics).
"""

from __future__ import annotations

import json
import struct

import numpy as np

from sparsemia.butterfly import ButterflyChain
from sparsemia.nn import layers as L
from sparsemia.nn.network import Network

__all__ = ["save_network", "load_network", "layer_from_manifest"]

_MAGIC = b"NETC"
_VERSION = 1


def _write_array(out, arr, code):
    arr = np.ascontiguousarray(arr)
    out.append(struct.pack("<BB", code, arr.ndim))
    out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    if code == 0:
        out.append(arr.astype("<f8").tobytes())
    else:
        out.append(arr.astype(np.uint8).tobytes())


def save_network(network, path):
    manifest = json.dumps(network.manifest()).encode("utf-8")
    params = network.params()
    buffers = network.buffers()
    out = [_MAGIC, struct.pack("<II", _VERSION, len(manifest)), manifest]
    arrays = []
    for p in params:
        arrays.append((p.value, 0))
    for p in params:
        if p.mask is None:
            arrays.append((np.zeros(0, dtype=np.uint8), 2))
        else:
            arrays.append((p.mask, 1))
    for b in buffers:
        arrays.append((b, 0))
    out.append(struct.pack("<I", len(arrays)))
    for arr, code in arrays:
        _write_array(out, arr, code)
    with open(path, "wb") as f:
        f.write(b"".join(out))


def _read_array(data, offset):
    code, ndim = struct.unpack_from("<BB", data, offset)
    offset += 2
    shape = struct.unpack_from(f"<{ndim}I", data, offset)
    offset += 4 * ndim
    count = int(np.prod(shape)) if ndim else 1
    end = offset + (8 * count if code == 0 else count)
    if end > len(data):
        raise ValueError("truncated checkpoint payload")
    if code == 0:
        arr = np.frombuffer(data[offset:end], dtype="<f8").reshape(shape).copy()
    else:
        arr = np.frombuffer(data[offset:end], dtype=np.uint8).reshape(shape).copy()
    return arr, code, end


def layer_from_manifest(spec):
    kind = spec["kind"]
    if kind == "dense":
        return L.Dense(spec["in_features"], spec["out_features"], bias=spec["bias"])
    if kind == "conv2d":
        return L.Conv2d(spec["in_channels"], spec["out_channels"], spec["ksize"],
                        stride=spec["stride"], padding=spec["padding"], bias=spec["bias"])
    if kind == "butterfly_linear":
        chain = ButterflyChain(tuple(tuple(q) for q in spec["chain"]))
        return L.ButterflyLinear(chain, bias=spec["bias"])
    if kind == "butterfly_conv":
        chain = ButterflyChain(tuple(tuple(q) for q in spec["chain"]))
        return L.ButterflyConv2d(chain, spec["in_channels"], spec["out_channels"],
                                 spec["ksize"], stride=spec["stride"],
                                 padding=spec["padding"], bias=spec["bias"])
    if kind == "batchnorm":
        return L.BatchNorm(spec["num_features"], momentum=spec["momentum"], eps=spec["eps"])
    if kind == "relu":
        return L.ReLU()
    if kind == "avgpool":
        return L.AvgPool2d(spec["window"])
    if kind == "flatten":
        return L.Flatten()
    raise ValueError(f"unknown layer kind {kind!r}")


def load_network(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != _MAGIC:
        raise ValueError("not a network checkpoint (bad magic)")
    version, mlen = struct.unpack_from("<II", data, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    manifest = json.loads(data[12:12 + mlen].decode("utf-8"))
    offset = 12 + mlen
    (count,) = struct.unpack_from("<I", data, offset)
    offset += 4
    network = Network([layer_from_manifest(spec) for spec in manifest])
    params = network.params()
    buffers = network.buffers()
    if count != 2 * len(params) + len(buffers):
        raise ValueError("checkpoint array count does not match manifest")
    arrays = []
    for _ in range(count):
        arr, code, offset = _read_array(data, offset)
        arrays.append((arr, code))
    for p, (arr, code) in zip(params, arrays[: len(params)]):
        p.value[...] = arr
    for p, (arr, code) in zip(params, arrays[len(params): 2 * len(params)]):
        p.mask = None if code == 2 else arr
    for buf, (arr, _) in zip(buffers, arrays[2 * len(params):]):
        buf[...] = arr
    return network
