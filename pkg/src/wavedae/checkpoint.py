"""Binary network checkpoints.

Layout (all integers little-endian, all arrays float64 little-endian in C
order, shapes as declared by the owning layer):

    magic           8 bytes  b"WAVEDAE\\0"
    format version  uint32
    variant code    uint8    0=fcn 1=forward 2=backward 3=all
    wavelet depth   uint8
    input length    uint32
    encoder widths  5 x uint32
    conv kernel     uint32
    branch kernel   uint32
    build seed      int64
    array count     uint32
    per array:
        name length uint16, name utf-8
        ndim        uint8, dims uint32 each
        data        float64 x prod(dims)

The array section covers every persistent array: layer parameters and
batch-norm running statistics, in network order.  Round trips are bit-exact.
"""

from __future__ import annotations

import struct

import numpy as np

from .model import ModelSpec, Network, build_model

__all__ = ["CheckpointError", "save_checkpoint", "load_checkpoint"]

MAGIC = b"WAVEDAE\x00"
FORMAT_VERSION = 1
_VARIANT_CODES = {"fcn": 0, "forward": 1, "backward": 2, "all": 3}
_CODE_VARIANTS = {v: k for k, v in _VARIANT_CODES.items()}


class CheckpointError(ValueError):
    """Raised for unreadable, truncated, or incompatible checkpoint files."""


def save_checkpoint(net: Network, path):
    spec = net.spec
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    chunks.append(
        struct.pack(
            "<BBI5IIIq",
            _VARIANT_CODES[spec.variant],
            spec.k,
            spec.input_length,
            *spec.encoder_channels,
            spec.kernel_conv,
            spec.kernel_wavelet_branch,
            spec.seed,
        )
    )
    arrays = net.state_arrays()
    chunks.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise CheckpointError(
                f"{self.path}: truncated checkpoint at byte {self.pos} "
                f"(needed {count} more bytes)"
            )
        out = self.data[self.pos:self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> Network:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), path)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint format version {version}, "
            f"expected {FORMAT_VERSION}"
        )
    (code, k, input_length, c1, c2, c3, c4, c5, kernel_conv, kernel_branch, seed) = (
        reader.unpack("<BBI5IIIq")
    )
    if code not in _CODE_VARIANTS:
        raise CheckpointError(f"{path}: unknown variant code {code}")
    spec = ModelSpec(
        variant=_CODE_VARIANTS[code],
        k=k,
        input_length=input_length,
        encoder_channels=(c1, c2, c3, c4, c5),
        kernel_conv=kernel_conv,
        kernel_wavelet_branch=kernel_branch,
        seed=seed,
    )
    net = build_model(spec)
    (count,) = reader.unpack("<I")
    arrays = net.state_arrays()
    if count != len(arrays):
        raise CheckpointError(
            f"{path}: checkpoint lists {count} arrays, model needs {len(arrays)}"
        )
    for name, target in arrays.items():
        (name_len,) = reader.unpack("<H")
        stored = reader.take(name_len).decode("utf-8")
        if stored != name:
            raise CheckpointError(
                f"{path}: array {stored!r} where {name!r} was expected"
            )
        (ndim,) = reader.unpack("<B")
        dims = reader.unpack(f"<{ndim}I")
        if dims != target.shape:
            raise CheckpointError(
                f"{path}: array {name!r} has shape {dims}, expected {target.shape}"
            )
        raw = reader.take(8 * int(np.prod(dims, dtype=np.int64)))
        target[...] = np.frombuffer(raw, dtype="<f8").reshape(dims)
    if reader.pos != len(reader.data):
        raise CheckpointError(
            f"{path}: {len(reader.data) - reader.pos} trailing bytes after arrays"
        )
    return net
