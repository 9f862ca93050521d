"""Binary checkpoint container for stacks of dense layers.

Layout, little-endian throughout::

    magic        4 bytes  b"PQNN"
    version      u16      (currently 1)
    header_len   u32
    header       header_len bytes of UTF-8 JSON (model kind and metadata)
    n_layers     u32
    per layer:
      in_dim     u32
      out_dim    u32
      activation u8       index into ("relu", "leaky_relu", "tanh", "identity")
      weights    out_dim*in_dim f64, row-major
      bias       out_dim f64
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .layers import ACTIVATIONS, DenseLayer

MAGIC = b"PQNN"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dump_layers(layers: list[DenseLayer], header: dict) -> bytes:
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", VERSION, len(head)), head, struct.pack("<I", len(layers))]
    for layer in layers:
        parts.append(
            struct.pack("<IIB", layer.in_dim, layer.out_dim, ACTIVATIONS.index(layer.activation))
        )
        parts.append(layer.weights.astype("<f8").tobytes())
        parts.append(layer.bias.astype("<f8").tobytes())
    return b"".join(parts)


def load_layers(data: bytes) -> tuple[dict, list[DenseLayer]]:
    try:
        if data[:4] != MAGIC:
            raise CheckpointError("bad checkpoint magic")
        version, head_len = struct.unpack_from("<HI", data, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 10
        header = json.loads(data[pos : pos + head_len].decode("utf-8"))
        pos += head_len
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        layers = []
        for _ in range(count):
            in_dim, out_dim, act = struct.unpack_from("<IIB", data, pos)
            pos += 9
            w = np.frombuffer(data, "<f8", out_dim * in_dim, pos).reshape(out_dim, in_dim)
            pos += 8 * out_dim * in_dim
            b = np.frombuffer(data, "<f8", out_dim, pos)
            pos += 8 * out_dim
            layers.append(DenseLayer(w.astype(np.float64), b.astype(np.float64), ACTIVATIONS[act]))
    except (struct.error, ValueError, IndexError, UnicodeDecodeError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"truncated or corrupt checkpoint: {exc}") from None
    if pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint")
    return header, layers
