"""Binary model checkpoints.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic b"BJSCCKPT"
    8       4     uint32 format version (1)
    12      4     uint32 descriptor length D
    16      D     UTF-8 JSON architecture descriptor
    16+D    ...   parameter blobs, float32 little-endian, C order, in the
                  descriptor's "params" order
    end-4   4     uint32 CRC-32 of the blob section

The descriptor records the model kind, codec geometry and widths, bit-mapper
settings and a ``[name, shape]`` manifest for every parameter.
"""
import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .bitmapper import BitMapper
from .codec import SemanticCodec
from .training import BACKBONE, BASELINE, BITMAPPER, BitMapperModel, QuantBaselineModel

MAGIC = b"BJSCCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _named(model):
    if isinstance(model, SemanticCodec):
        return BACKBONE, list(model.named_parameters("codec."))
    return model.kind, list(model.named_parameters())


def save_checkpoint(path, model, meta=None):
    kind, named = _named(model)
    codec = model if isinstance(model, SemanticCodec) else model.codec
    descriptor = {
        "kind": kind,
        "codec": codec.descriptor(),
        "mapper": model.mapper.descriptor() if kind == BITMAPPER else None,
        "params": [[name, list(p.shape)] for name, p in named],
        "meta": meta or {},
    }
    header = json.dumps(descriptor, sort_keys=True).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(p.data, dtype="<f4").tobytes() for _, p in named)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        fh.write(blob)
        fh.write(struct.pack("<I", zlib.crc32(blob)))
    return path


def read_checkpoint(path):
    """Return ``(descriptor, {name: float32 array})`` after validating the file."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    buf = path.read_bytes()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    try:
        version, dlen = struct.unpack_from("<II", buf, 8)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        if 16 + dlen + 4 > len(buf):
            raise CheckpointError(f"{path}: truncated file")
        descriptor = json.loads(buf[16:16 + dlen].decode("utf-8"))
        blob = buf[16 + dlen:-4]
        (crc,) = struct.unpack("<I", buf[-4:])
        if zlib.crc32(blob) != crc:
            raise CheckpointError(f"{path}: checksum mismatch")
        arrays = {}
        offset = 0
        for name, shape in descriptor["params"]:
            count = int(np.prod(shape))
            if offset + 4 * count > len(blob):
                raise CheckpointError(f"{path}: blob shorter than the parameter manifest")
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
            arrays[name] = arr.astype(np.float32).reshape(shape)
            offset += 4 * count
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from None
    if offset != len(blob):
        raise CheckpointError(f"{path}: blob size does not match the parameter manifest")
    return descriptor, arrays


def _build(descriptor):
    c = descriptor["codec"]
    codec = SemanticCodec(c["height"], c["width"], c["channels"], tuple(c["widths"]),
                          bit_channels=c["bit_channels"])
    kind = descriptor["kind"]
    if kind == BACKBONE:
        return codec
    if kind == BASELINE:
        return QuantBaselineModel(codec)
    if kind == BITMAPPER:
        m = descriptor["mapper"]
        return BitMapperModel(codec, BitMapper(m["channels"], m["bits_per_feature"], m["tau"]))
    raise CheckpointError(f"unknown model kind {kind!r}")


def load_checkpoint(path):
    """Rebuild the model stored at ``path``; returns ``(model, descriptor)``."""
    descriptor, arrays = read_checkpoint(path)
    model = _build(descriptor)
    _, named = _named(model)
    if [n for n, _ in named] != [n for n, _ in descriptor["params"]]:
        raise CheckpointError(f"{path}: parameter manifest does not match the architecture")
    for name, p in named:
        if arrays[name].shape != p.shape:
            raise CheckpointError(f"{path}: {name} has shape {arrays[name].shape}, "
                                  f"expected {p.shape}")
        p.data = arrays[name].copy()
    return model, descriptor


def load_codec_into(codec, path):
    """Copy codec weights from any checkpoint kind into ``codec``."""
    descriptor, arrays = read_checkpoint(path)
    for name, p in codec.named_parameters("codec."):
        if name not in arrays or arrays[name].shape != p.shape:
            raise CheckpointError(f"{path}: no compatible codec weights for {name}")
        p.data = arrays[name].copy()
    return descriptor
