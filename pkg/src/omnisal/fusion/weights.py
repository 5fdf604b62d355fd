"""Binary weight files.

Layout: the 8 magic bytes ``OSALW001``; then, layer by layer, each tensor as
``u32 ndim``, ``ndim x u32`` dims and the float32 payload, all little-endian.
Tensor order within a layer: kernel, bias, then gamma, beta, running mean and
running variance for batch-normalised layers.
"""

from __future__ import annotations

import io
import os
import struct

import numpy as np

from .network import CHANNELS, KERNEL, ConvLayer, FusionNetwork

MAGIC = b"OSALW001"


class WeightFormatError(ValueError):
    pass


def expected_shapes(channels=CHANNELS) -> list[list[tuple[int, ...]]]:
    shapes = []
    n = len(channels) - 1
    for i in range(n):
        cin, cout = channels[i], channels[i + 1]
        layer = [(KERNEL, KERNEL, cin, cout), (cout,)]
        if i < n - 1:
            layer += [(cout,)] * 4
        shapes.append(layer)
    return shapes


def dumps(net: FusionNetwork) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    for layer in net.layers:
        for _, arr in layer.arrays():
            buf.write(struct.pack("<I", arr.ndim))
            buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def loads(blob: bytes, channels=CHANNELS) -> FusionNetwork:
    if blob[:len(MAGIC)] != MAGIC:
        raise WeightFormatError(f"bad magic {blob[:len(MAGIC)]!r}, expected {MAGIC!r}")
    pos = len(MAGIC)

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise WeightFormatError("truncated weight stream")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    layers = []
    names = ("weight", "bias", "gamma", "beta", "running_mean", "running_var")
    for li, shapes in enumerate(expected_shapes(channels)):
        fields = {}
        for name, shape in zip(names, shapes):
            (ndim,) = struct.unpack("<I", take(4))
            dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
            if tuple(dims) != shape:
                raise WeightFormatError(f"layer {li} {name}: shape {dims} does not match expected {shape}")
            count = int(np.prod(dims))
            fields[name] = np.frombuffer(take(4 * count), dtype="<f4").reshape(dims).astype(np.float32)
        layers.append(ConvLayer(**fields))
    if pos != len(blob):
        raise WeightFormatError(f"{len(blob) - pos} trailing bytes after the last layer")
    for layer in layers:
        if layer.has_bn and np.any(layer.running_var <= 0):
            raise WeightFormatError("running variance must be positive")
    return FusionNetwork(layers)


def save(net: FusionNetwork, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(net))


def load(path: str | os.PathLike) -> FusionNetwork:
    with open(path, "rb") as fh:
        return loads(fh.read())
