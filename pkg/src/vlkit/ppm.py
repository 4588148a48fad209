"""Binary portable pixmap (P6) I/O and nearest-neighbour resampling.

Only 8-bit P6 is supported; convert other formats first, e.g.
``convert in.png out.ppm`` (ImageMagick) or ``ffmpeg -i in.png out.ppm``.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

_HEADER = re.compile(rb"P6(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)\s")


def read_ppm(path) -> np.ndarray:
    """Read a P6 file into an ``(H, W, 3)`` uint8 array."""
    data = Path(path).read_bytes()
    m = _HEADER.match(data)
    if not m:
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    w, h, maxval = (int(g) for g in m.groups())
    if w < 1 or h < 1 or maxval != 255:
        raise ValueError(f"{path}: unsupported PPM geometry {w}x{h} maxval {maxval}")
    body = data[m.end():]
    if len(body) < w * h * 3:
        raise ValueError(f"{path}: truncated pixel data")
    return np.frombuffer(body, dtype=np.uint8, count=w * h * 3).reshape(h, w, 3)


def write_ppm(path, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError("pixels must be (H, W, 3)")
    h, w, _ = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())


def resize_nearest(pixels: np.ndarray, height: int, width: int) -> np.ndarray:
    h, w = pixels.shape[:2]
    rows = np.minimum((np.arange(height) + 0.5) * h / height, h - 1).astype(np.int64)
    cols = np.minimum((np.arange(width) + 0.5) * w / width, w - 1).astype(np.int64)
    return pixels[rows[:, None], cols[None, :]]


def synthetic_image(height: int, width: int, seed: int = 0) -> np.ndarray:
    """Deterministic gradient-plus-noise test image."""
    rng = np.random.default_rng(seed)
    y = np.linspace(0, 255, height)[:, None]
    x = np.linspace(0, 255, width)[None, :]
    base = np.stack([np.broadcast_to(y, (height, width)), np.broadcast_to(x, (height, width)), (y + x) / 2], axis=-1)
    noise = rng.integers(0, 16, size=(height, width, 3))
    return np.clip(base + noise, 0, 255).astype(np.uint8)
