"""Native dynamic-resolution geometry: resize rules, patch grids, token counts."""

from __future__ import annotations

import math
from dataclasses import dataclass

PATCH_SIZE = 14
MERGE_SIZE = 2
FACTOR = PATCH_SIZE * MERGE_SIZE  # 28: one merged LLM token per 28x28 pixels

DEFAULT_MIN_TOKENS = 1
DEFAULT_MAX_TOKENS = 16384


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


@dataclass(frozen=True)
class PatchGrid:
    """Resized image dimensions with the derived ViT patch grid and merged LLM-token grid."""

    orig_h: int
    orig_w: int
    resized_h: int
    resized_w: int

    def __post_init__(self):
        for name in ("resized_h", "resized_w"):
            v = getattr(self, name)
            if v < FACTOR or v % FACTOR:
                raise ValueError(f"{name}={v} must be a positive multiple of {FACTOR}")
        if self.orig_h < 1 or self.orig_w < 1:
            raise ValueError("original dimensions must be positive")

    @property
    def grid_h(self) -> int:
        return self.resized_h // PATCH_SIZE

    @property
    def grid_w(self) -> int:
        return self.resized_w // PATCH_SIZE

    @property
    def merged_h(self) -> int:
        return self.grid_h // MERGE_SIZE

    @property
    def merged_w(self) -> int:
        return self.grid_w // MERGE_SIZE

    @property
    def tokens(self) -> int:
        """Merged LLM tokens for one frame."""
        return self.merged_h * self.merged_w

    def to_dict(self) -> dict:
        return {
            "orig": [self.orig_h, self.orig_w],
            "resized": [self.resized_h, self.resized_w],
            "grid": [self.grid_h, self.grid_w],
            "merged": [self.merged_h, self.merged_w],
        }


def _best_grid_in_range(h: int, w: int, lo: int, hi: int) -> tuple[int, int]:
    # Fallback search over merged-unit grids (a rows, b cols) with lo <= a*b <= hi,
    # picking the least aspect distortion, then the most tokens.
    target = math.log(h / w)
    best = None
    for a in range(1, hi + 1):
        b_lo = max(1, -(-lo // a))
        b_hi = hi // a
        if b_lo > b_hi:
            continue
        # the ideal b for this a is a*w/h; check the feasible neighbours
        ideal = a * w / h
        for b in {b_lo, b_hi, min(max(math.floor(ideal), b_lo), b_hi), min(max(math.ceil(ideal), b_lo), b_hi)}:
            key = (abs(math.log(a / b) - target), -(a * b), a)
            if best is None or key < best[0]:
                best = (key, a, b)
    return best[1], best[2]


def smart_resize(
    h: int,
    w: int,
    min_tokens: int = DEFAULT_MIN_TOKENS,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> PatchGrid:
    """Resize ``(h, w)`` to multiples of 28 within a merged-token budget.

    Each side is rounded to the nearest multiple of 28 (never below 28). If
    that exceeds ``max_tokens``, both sides are scaled by the common factor
    ``sqrt(max_tokens / current)`` and floored to multiples of 28; if it
    falls short of ``min_tokens`` they are scaled up and ceiled instead.
    Tokens are counted as merged LLM tokens, one per 28x28 block.

    >>> g = smart_resize(1000, 600)
    >>> (g.resized_h, g.resized_w, g.tokens)
    (1008, 588, 756)
    """
    if h < 1 or w < 1:
        raise ValueError(f"image dims must be positive, got {h}x{w}")
    if min_tokens < 1 or max_tokens < min_tokens:
        raise ValueError(f"impossible token budget [{min_tokens}, {max_tokens}]")

    a = max(1, round_half_up(h / FACTOR))
    b = max(1, round_half_up(w / FACTOR))

    if a * b > max_tokens:
        beta = math.sqrt(h * w / (max_tokens * FACTOR * FACTOR))
        a = max(1, math.floor(h / beta / FACTOR))
        b = max(1, math.floor(w / beta / FACTOR))
        # clamping a thin side up to one unit can overshoot; trim the long side
        while a * b > max_tokens:
            if a >= b:
                a -= 1
            else:
                b -= 1
    elif a * b < min_tokens:
        beta = math.sqrt(min_tokens * FACTOR * FACTOR / (h * w))
        a = max(1, math.ceil(h * beta / FACTOR))
        b = max(1, math.ceil(w * beta / FACTOR))

    if not (min_tokens <= a * b <= max_tokens):
        a, b = _best_grid_in_range(h, w, min_tokens, max_tokens)

    return PatchGrid(h, w, a * FACTOR, b * FACTOR)


def vit_token_count(grid: PatchGrid) -> int:
    """Number of 14x14 patches seen by the ViT."""
    return grid.grid_h * grid.grid_w


def llm_token_count(grid: PatchGrid) -> int:
    """Number of tokens after the 2x2 merger (a quarter of the ViT patches)."""
    if grid.grid_h % MERGE_SIZE or grid.grid_w % MERGE_SIZE:
        raise ValueError(f"grid {grid.grid_h}x{grid.grid_w} is not divisible by the merge size")
    return (grid.grid_h // MERGE_SIZE) * (grid.grid_w // MERGE_SIZE)
