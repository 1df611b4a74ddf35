"""Image sources: binary PPM/PGM files and seeded synthetic generators.

All sources yield float32 images of shape ``(H, W, 3)`` with values in
``[0, 1]``.  Grayscale (P5) files are replicated to three channels.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

GENERATORS = ("gradients", "checkerboards", "gaussian-blobs", "mixed")


class ImageFormatError(ValueError):
    pass


def _header_tokens(buf, count):
    tokens = []
    i = 0
    n = len(buf)
    while len(tokens) < count:
        while i < n and buf[i:i + 1].isspace():
            i += 1
        if i < n and buf[i:i + 1] == b"#":
            while i < n and buf[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not buf[i:i + 1].isspace() and buf[i:i + 1] != b"#":
            i += 1
        if start == i:
            raise ImageFormatError("truncated header")
        tokens.append(buf[start:i])
    # exactly one whitespace byte separates the header from the raster
    if i >= n or not buf[i:i + 1].isspace():
        raise ImageFormatError("missing whitespace after header")
    return tokens, i + 1


def read_pnm(path):
    """Read a binary P6 (RGB) or P5 (gray) file with maxval 255."""
    buf = Path(path).read_bytes()
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"unsupported magic {magic!r}; expected P5 or P6")
    try:
        tokens, offset = _header_tokens(buf, 4)
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError(f"malformed header: {exc}") from None
    if width <= 0 or height <= 0:
        raise ImageFormatError(f"invalid geometry {width}x{height}")
    if maxval != 255:
        raise ImageFormatError(f"maxval {maxval} not supported; expected 255")
    channels = 3 if magic == b"P6" else 1
    expected = width * height * channels
    raster = np.frombuffer(buf, dtype=np.uint8, count=-1, offset=offset)
    if raster.size < expected:
        raise ImageFormatError(f"raster has {raster.size} bytes, expected {expected}")
    img = raster[:expected].reshape(height, width, channels).astype(np.float32) / 255.0
    if channels == 1:
        img = np.repeat(img, 3, axis=2)
    return img


def write_pnm(path, image):
    """Write an ``(H, W, 3)`` or ``(H, W)`` image in [0, 1] as P6 / P5."""
    img = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    magic = b"P6" if img.ndim == 3 else b"P5"
    h, w = img.shape[:2]
    Path(path).write_bytes(magic + f"\n{w} {h}\n255\n".encode() + img.tobytes())


def _gradient(h, w, rng):
    angle = rng.uniform(0, 2 * np.pi)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    t = (np.cos(angle) * xx / w + np.sin(angle) * yy / h)
    t = (t - t.min()) / max(float(np.ptp(t)), 1e-6)
    c0, c1 = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
    return c0 + t[..., None] * (c1 - c0)


def _checkerboard(h, w, rng):
    cell = int(rng.choice([4, 8, 16]))
    oy, ox = rng.integers(0, cell, 2)
    yy, xx = np.mgrid[0:h, 0:w]
    parity = (((yy + oy) // cell + (xx + ox) // cell) % 2).astype(np.float32)
    c0, c1 = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
    return c0 + parity[..., None] * (c1 - c0)


def _blobs(h, w, rng):
    img = np.broadcast_to(rng.uniform(0, 1, 3), (h, w, 3)).astype(np.float64)
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(int(rng.integers(1, 5))):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        sigma = rng.uniform(0.08, 0.3) * min(h, w)
        weight = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))[..., None]
        img = img * (1 - weight) + weight * rng.uniform(0, 1, 3)
    return img


_MAKERS = {"gradients": _gradient, "checkerboards": _checkerboard, "gaussian-blobs": _blobs}


def synthetic_images(name, count, height, width, seed):
    """Deterministic stream of ``count`` synthetic images."""
    if name not in GENERATORS:
        raise ValueError(f"unknown generator {name!r}; choose from {', '.join(GENERATORS)}")
    rng = np.random.default_rng([seed, 7])
    kinds = list(_MAKERS)
    out = np.empty((count, height, width, 3), dtype=np.float32)
    for i in range(count):
        kind = kinds[int(rng.integers(len(kinds)))] if name == "mixed" else name
        out[i] = np.clip(_MAKERS[kind](height, width, rng), 0.0, 1.0)
    return out


@dataclass
class IngestReport:
    images: np.ndarray
    skipped: list = field(default_factory=list)  # (path, reason)


def load_directory(directory, height, width, seed):
    """Tile every readable PPM/PGM in ``directory`` into ``height x width`` patches.

    Files that fail to parse, or whose size is not a multiple of the tile
    size, are skipped with a diagnostic; the rest are unaffected.  Tiles are
    shuffled with ``seed``.
    """
    paths = sorted(p for p in Path(directory).iterdir()
                   if p.suffix.lower() in (".ppm", ".pgm", ".pnm"))
    tiles = []
    skipped = []
    for path in paths:
        try:
            img = read_pnm(path)
        except (ImageFormatError, OSError) as exc:
            skipped.append((str(path), str(exc)))
            log.warning("skipping %s: %s", path, exc)
            continue
        h, w = img.shape[:2]
        if h % height or w % width:
            reason = f"geometry {w}x{h} is not a multiple of the {width}x{height} tile"
            skipped.append((str(path), reason))
            log.warning("skipping %s: %s", path, reason)
            continue
        for y in range(0, h, height):
            for x in range(0, w, width):
                tiles.append(img[y:y + height, x:x + width])
    images = np.stack(tiles) if tiles else np.empty((0, height, width, 3), np.float32)
    order = np.random.default_rng([seed, 11]).permutation(len(images))
    return IngestReport(images[order], skipped)


def ingest_dataset(spec, count, height, width, seed):
    """Resolve a dataset spec (generator name or directory) to an ``IngestReport``."""
    if spec in GENERATORS:
        return IngestReport(synthetic_images(spec, count, height, width, seed))
    path = Path(spec)
    if not path.is_dir():
        raise ValueError(f"dataset {spec!r} is neither a generator name nor a directory")
    report = load_directory(path, height, width, seed)
    report.images = report.images[:count]
    return report
