"""Rotary position embeddings: 1D, 2D (ViT) and multimodal (t, h, w) with time-aligned temporal ids.

Channel pairing follows the rotate-half convention: for a head of size ``d``
channel ``i`` and channel ``i + d/2`` form pair ``i``, rotated by
``position * freq[i]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .geometry import round_half_up


@dataclass(frozen=True)
class RopeConfig:
    """Frequency ladder and channel sections for multimodal RoPE.

    ``section_split`` gives the number of channel pairs driven by the
    temporal, height and width ids respectively. When omitted it defaults to
    a 1/4, 3/8, 3/8 split, i.e. ``(16, 24, 24)`` for ``head_dim=128``.
    ``tau`` is the number of temporal ids per second of video.
    """

    head_dim: int = 128
    base_theta: float = 10000.0
    section_split: tuple[int, int, int] | None = None
    tau: float = 2.0

    def __post_init__(self):
        if self.head_dim < 2 or self.head_dim % 2:
            raise ValueError(f"head_dim must be even and >= 2, got {self.head_dim}")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.base_theta <= 0:
            raise ValueError("base_theta must be positive")
        pairs = self.head_dim // 2
        if self.section_split is None:
            t = pairs // 4
            h = (pairs - t) // 2
            object.__setattr__(self, "section_split", (t, h, pairs - t - h))
        split = tuple(int(s) for s in self.section_split)
        if len(split) != 3 or min(split) < 0 or sum(split) != pairs:
            raise ValueError(f"section_split {self.section_split} must be 3 non-negative ints summing to {pairs}")
        object.__setattr__(self, "section_split", split)


def rope_frequencies(config: RopeConfig) -> np.ndarray:
    """Inverse-frequency ladder ``base_theta ** (-2i / head_dim)`` for ``i < head_dim/2``."""
    i = np.arange(config.head_dim // 2, dtype=np.float64)
    return config.base_theta ** (-2.0 * i / config.head_dim)


def _rotate(vec: np.ndarray, angles: np.ndarray) -> np.ndarray:
    half = vec.shape[-1] // 2
    x1, x2 = vec[..., :half], vec[..., half:]
    cos, sin = np.cos(angles), np.sin(angles)
    return np.concatenate([x1 * cos - x2 * sin, x2 * cos + x1 * sin], axis=-1)


def apply_rope_1d(vec, pos, head_dim: int | None = None, base_theta: float = 10000.0) -> np.ndarray:
    """Classic 1D RoPE. ``vec`` is ``(..., d)``, ``pos`` broadcasts against ``vec[..., 0]``."""
    vec = np.asarray(vec, dtype=np.float64)
    d = vec.shape[-1] if head_dim is None else head_dim
    if vec.shape[-1] != d or d % 2:
        raise ValueError(f"vector of size {vec.shape[-1]} does not match even head_dim {d}")
    freqs = rope_frequencies(RopeConfig(head_dim=d, base_theta=base_theta))
    pos = np.asarray(pos, dtype=np.float64)[..., None]
    return _rotate(vec, pos * freqs)


def apply_mrope(vec, ids, config: RopeConfig) -> np.ndarray:
    """Rotate ``vec`` by multimodal position ids.

    Args:
        vec: ``(..., head_dim)`` query or key vectors.
        ids: ``(t, h, w)`` triple, or an ``(..., 3)`` array broadcastable
            against ``vec``'s leading dims.
        config: frequency ladder and section split.

    The first ``t_pairs`` channel pairs rotate with the temporal id, the next
    ``h_pairs`` with the height id and the rest with the width id; each
    section keeps its own slice of the one frequency ladder.
    """
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape[-1] != config.head_dim:
        raise ValueError(f"vector size {vec.shape[-1]} != head_dim {config.head_dim}")
    ids = np.asarray(ids, dtype=np.float64)
    if ids.shape[-1] != 3:
        raise ValueError("ids must have a trailing axis of size 3 (t, h, w)")
    component = np.repeat(np.arange(3), config.section_split)
    pos = ids[..., component]
    return _rotate(vec, pos * rope_frequencies(config))


@dataclass
class MRopeIds:
    """Per-token ``(t, h, w)`` position ids plus the id at which the next span starts."""

    ids: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    next_start: int = 0

    def __len__(self) -> int:
        return self.ids.shape[0]

    @property
    def t(self) -> np.ndarray:
        return self.ids[:, 0]

    @property
    def h(self) -> np.ndarray:
        return self.ids[:, 1]

    @property
    def w(self) -> np.ndarray:
        return self.ids[:, 2]

    def as_tuples(self) -> list[tuple[int, int, int]]:
        return [tuple(int(v) for v in row) for row in self.ids]


def mrope_ids_text(start: int, length: int) -> MRopeIds:
    if length < 0:
        raise ValueError("length must be non-negative")
    p = start + np.arange(length, dtype=np.int64)
    return MRopeIds(np.stack([p, p, p], axis=1), start + length)


def _spatial_ids(merged_h: int, merged_w: int) -> tuple[np.ndarray, np.ndarray]:
    if merged_h < 1 or merged_w < 1:
        raise ValueError(f"merged grid must be at least 1x1, got {merged_h}x{merged_w}")
    rows, cols = np.divmod(np.arange(merged_h * merged_w, dtype=np.int64), merged_w)
    return rows, cols


def mrope_ids_image(start: int, merged_h: int, merged_w: int) -> MRopeIds:
    """Constant temporal id; height/width ids follow the row-major token position."""
    rows, cols = _spatial_ids(merged_h, merged_w)
    t = np.full_like(rows, start)
    ids = np.stack([t, start + rows, start + cols], axis=1)
    return MRopeIds(ids, start + max(merged_h, merged_w))


def temporal_offsets(frame_times: Sequence[float], tau: float) -> np.ndarray:
    """Temporal id offsets ``round_half_up(time * tau)`` for each frame group."""
    times = np.asarray(frame_times, dtype=np.float64)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("frame_times must be a non-empty 1-D sequence")
    if times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ValueError("frame_times must be non-negative and strictly increasing")
    return np.floor(times * tau + 0.5).astype(np.int64)


def mrope_ids_video(
    start: int,
    frame_times: Sequence[float],
    merged_h: int,
    merged_w: int,
    config: RopeConfig | None = None,
) -> MRopeIds:
    """Ids for a video whose frame groups sit at ``frame_times`` seconds.

    The temporal id of group ``j`` is ``start + round(frame_times[j] * tau)``,
    so two samplings of one clip agree wherever their timestamps coincide.
    Height/width ids restart for every frame group, as for an image.
    """
    tau = (config or RopeConfig()).tau
    offsets = temporal_offsets(frame_times, tau)
    rows, cols = _spatial_ids(merged_h, merged_w)
    per = rows.size
    t = np.repeat(start + offsets, per)
    h = np.tile(start + rows, offsets.size)
    w = np.tile(start + cols, offsets.size)
    next_start = start + max(int(offsets[-1]) + 1, merged_h, merged_w)
    return MRopeIds(np.stack([t, h, w], axis=1), next_start)


def rope2d_ids_vit(grid_h: int, grid_w: int) -> np.ndarray:
    """``(row, col)`` pairs for every patch in row-major order, shape ``(grid_h*grid_w, 2)``."""
    if grid_h < 1 or grid_w < 1:
        raise ValueError("grid dims must be >= 1")
    rows, cols = np.divmod(np.arange(grid_h * grid_w, dtype=np.int64), grid_w)
    return np.stack([rows, cols], axis=1)


def apply_rope_2d(x, rc_ids, base_theta: float = 10000.0) -> np.ndarray:
    """2D RoPE for ViT heads.

    ``x`` is ``(n, dh)`` with ``dh`` divisible by 4. Half of the channel pairs
    rotate with the row index and half with the column index, both sharing a
    ``dh/4``-long frequency ladder.
    """
    x = np.asarray(x, dtype=np.float64)
    dh = x.shape[-1]
    if dh % 4:
        raise ValueError(f"2D RoPE needs head dim divisible by 4, got {dh}")
    quarter = dh // 4
    freqs = base_theta ** (-np.arange(quarter, dtype=np.float64) / quarter)
    rc = np.asarray(rc_ids, dtype=np.float64)
    angles = np.concatenate([rc[..., 0:1] * freqs, rc[..., 1:2] * freqs], axis=-1)
    return _rotate(x, angles)


@dataclass(frozen=True)
class TextSpan:
    length: int


@dataclass(frozen=True)
class ImageSpan:
    merged_h: int
    merged_w: int


@dataclass(frozen=True)
class VideoSpan:
    frame_times: tuple[float, ...]
    merged_h: int
    merged_w: int


Span = Union[TextSpan, ImageSpan, VideoSpan]


def mrope_ids_sequence(spans: Sequence[Span], config: RopeConfig | None = None, start: int = 0) -> MRopeIds:
    """Concatenate position ids for an interleaved text/image/video sequence.

    Each span starts at the previous span's ``next_start``, so every id used
    by a later span is larger than those of earlier spans.
    """
    config = config or RopeConfig()
    chunks = []
    pos = start
    for span in spans:
        if isinstance(span, TextSpan):
            part = mrope_ids_text(pos, span.length)
        elif isinstance(span, ImageSpan):
            part = mrope_ids_image(pos, span.merged_h, span.merged_w)
        elif isinstance(span, VideoSpan):
            part = mrope_ids_video(pos, span.frame_times, span.merged_h, span.merged_w, config)
        else:
            raise TypeError(f"unknown span type {type(span).__name__}")
        chunks.append(part.ids)
        pos = part.next_start
    ids = np.concatenate(chunks, axis=0) if chunks else np.zeros((0, 3), dtype=np.int64)
    return MRopeIds(ids, pos)


__all__ = [
    "RopeConfig",
    "MRopeIds",
    "TextSpan",
    "ImageSpan",
    "VideoSpan",
    "rope_frequencies",
    "apply_rope_1d",
    "apply_mrope",
    "apply_rope_2d",
    "mrope_ids_text",
    "mrope_ids_image",
    "mrope_ids_video",
    "mrope_ids_sequence",
    "rope2d_ids_vit",
    "temporal_offsets",
]
