"""First-fit-decreasing packing of variable-length samples into fixed-capacity sequences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

PRESET_CAPACITIES = (8192, 32768)
SPAN_OVERHEAD = 2  # vision start/end marker tokens per visual span


class PackingError(ValueError):
    def __init__(self, message: str, sample_id=None):
        super().__init__(message)
        self.sample_id = sample_id


@dataclass(frozen=True)
class Bin:
    ids: tuple
    length: int


@dataclass(frozen=True)
class PackedBatch:
    bins: tuple[Bin, ...]
    capacity: int

    def __len__(self) -> int:
        return len(self.bins)

    def to_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "bins": [{"ids": list(b.ids), "length": b.length} for b in self.bins],
        }


def sample_length(text_tokens: int, visual_tokens: Sequence[int] = ()) -> int:
    """LLM sequence length of one sample: text + merged visual tokens + 2 markers per visual span."""
    if text_tokens < 0 or any(v < 0 for v in visual_tokens):
        raise ValueError("token counts must be non-negative")
    return text_tokens + sum(visual_tokens) + SPAN_OVERHEAD * len(visual_tokens)


def pack(lengths: Sequence[int], capacity: int, ids: Sequence[Hashable] | None = None) -> PackedBatch:
    """Pack samples into bins of ``capacity`` tokens with first-fit-decreasing.

    Items are placed longest first (ties keep input order) into the first
    bin with room. ``ids`` default to the input positions.

    >>> [b.ids for b in pack([5000, 3000, 4000, 2000, 8000], 8192).bins]
    [(4,), (0, 1), (2, 3)]
    """
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    ids = list(range(len(lengths))) if ids is None else list(ids)
    if len(ids) != len(lengths):
        raise ValueError("ids and lengths differ in length")
    for sid, n in zip(ids, lengths):
        if n < 0:
            raise PackingError(f"sample {sid!r} has negative length {n}", sid)
        if n > capacity:
            raise PackingError(f"sample {sid!r} of length {n} exceeds capacity {capacity}", sid)

    order = sorted(range(len(lengths)), key=lambda i: (-lengths[i], i))
    members: list[list[int]] = []
    fill: list[int] = []
    for i in order:
        n = lengths[i]
        for b, used in enumerate(fill):
            if used + n <= capacity:
                members[b].append(i)
                fill[b] = used + n
                break
        else:
            members.append([i])
            fill.append(n)
    bins = tuple(Bin(tuple(ids[i] for i in sorted(m)), f) for m, f in zip(members, fill))
    return PackedBatch(bins, capacity)


def balance_report(batch: PackedBatch) -> dict:
    """Per-bin fill ratios and their spread."""
    fills = np.array([b.length / batch.capacity for b in batch.bins], dtype=np.float64)
    if fills.size == 0:
        return {"bins": 0, "fills": [], "mean_fill": 0.0, "variance": 0.0, "min_fill": 0.0, "max_fill": 0.0}
    return {
        "bins": int(fills.size),
        "fills": fills.tolist(),
        "mean_fill": float(fills.mean()),
        "variance": float(fills.var()),
        "min_fill": float(fills.min()),
        "max_fill": float(fills.max()),
    }
