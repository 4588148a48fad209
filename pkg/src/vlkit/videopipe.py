"""Dynamic-FPS frame sampling, two-frame grouping, token budgets and timestamp strings."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .geometry import DEFAULT_MAX_TOKENS, PatchGrid, round_half_up, smart_resize
from .rope import RopeConfig, temporal_offsets

MAX_FRAMES = 768
MAX_VIDEO_TOKENS = 24576
MIN_FRAMES = 2


@dataclass(frozen=True)
class FrameSampling:
    timestamps: tuple[float, ...]
    source_fps: float
    effective_fps: float
    capped: bool = False  # True when max_frames forced a lower rate

    @property
    def group_times(self) -> tuple[float, ...]:
        # time of a two-frame group is the time of its first member
        return self.timestamps[::2]

    def __len__(self) -> int:
        return len(self.timestamps)


@dataclass(frozen=True)
class FrameGroup:
    frames: tuple[int, int]
    time: float


def _ceil_count(x: float) -> int:
    # number of k >= 0 with k < x, tolerant of float noise in x
    return max(0, math.ceil(round(x, 9)))


def _snap(times, source_fps: float, n_source: int) -> list[float]:
    out = []
    last = -1
    for t in times:
        j = min(round_half_up(t * source_fps), n_source - 1)
        if j > last:
            out.append(j / source_fps)
            last = j
    return out


def sample_frames(duration: float, source_fps: float, target_fps: float, max_frames: int = MAX_FRAMES) -> FrameSampling:
    """Timestamps at ``k / target_fps`` snapped to source frames.

    If that would exceed ``max_frames`` the rate drops to
    ``max_frames / duration``. At least two frames are always returned so
    that pairing forms a real pair; for clips holding fewer than two source
    frames the second timestamp is left unsnapped at ``duration / 2``.
    """
    if duration <= 0 or source_fps <= 0 or target_fps <= 0:
        raise ValueError("duration and fps values must be positive")
    if max_frames < MIN_FRAMES:
        raise ValueError(f"max_frames must be >= {MIN_FRAMES}")
    n_source = max(1, _ceil_count(duration * source_fps))
    fps = target_fps
    n = _ceil_count(duration * fps)
    capped = n > max_frames
    if capped:
        fps = max_frames / duration
        n = min(_ceil_count(duration * fps), max_frames)
    if n < MIN_FRAMES:
        fps = MIN_FRAMES / duration
        n = MIN_FRAMES
    times = _snap((k / fps for k in range(n)), source_fps, n_source)
    if len(times) < MIN_FRAMES:
        if n_source >= MIN_FRAMES:
            times = [0.0, (n_source - 1) / source_fps]
        else:
            times = [0.0, duration / 2]
    return FrameSampling(tuple(times), float(source_fps), float(fps), capped)


def pair_frames(sampling: FrameSampling | list) -> list[FrameGroup]:
    """Pair consecutive frames; an odd last frame is paired with itself."""
    times = sampling.timestamps if isinstance(sampling, FrameSampling) else tuple(sampling)
    if not times:
        raise ValueError("need at least one frame")
    groups = []
    for i in range(0, len(times), 2):
        j = i + 1 if i + 1 < len(times) else i
        groups.append(FrameGroup((i, j), times[i]))
    return groups


def enforce_token_budget(grid: PatchGrid, n_groups: int, max_tokens: int = MAX_VIDEO_TOKENS) -> tuple[PatchGrid, int]:
    """Fit ``n_groups`` frame groups of ``grid`` into ``max_tokens`` merged tokens.

    Spatial resolution shrinks first (per-group budget
    ``max_tokens // n_groups``); only when even one token per group is too
    many does the group count drop.
    """
    if max_tokens < 1:
        raise ValueError("token budget is smaller than one frame at minimal resolution")
    if n_groups < 1:
        raise ValueError("n_groups must be >= 1")
    if n_groups * grid.tokens <= max_tokens:
        return grid, n_groups
    per_group = max_tokens // n_groups
    if per_group >= 1:
        return smart_resize(grid.orig_h, grid.orig_w, 1, min(per_group, grid.tokens)), n_groups
    return smart_resize(grid.orig_h, grid.orig_w, 1, 1), max_tokens


@dataclass(frozen=True)
class VideoPlan:
    sampling: FrameSampling
    groups: tuple[FrameGroup, ...]
    grid: PatchGrid
    temporal_ids: tuple[int, ...]

    @property
    def n_frames(self) -> int:
        return len(self.sampling)

    @property
    def total_tokens(self) -> int:
        return len(self.groups) * self.grid.tokens


def plan_video(
    duration: float,
    source_fps: float,
    target_fps: float,
    height: int,
    width: int,
    *,
    max_frames: int = MAX_FRAMES,
    max_tokens: int = MAX_VIDEO_TOKENS,
    frame_max_tokens: int = DEFAULT_MAX_TOKENS,
    rope: RopeConfig | None = None,
) -> VideoPlan:
    """Sample, pair and size a video so it respects the frame and token caps."""
    sampling = sample_frames(duration, source_fps, target_fps, max_frames)
    groups = pair_frames(sampling)
    grid = smart_resize(height, width, 1, frame_max_tokens)
    grid, n_groups = enforce_token_budget(grid, len(groups), max_tokens)
    if n_groups < len(groups):
        sampling = sample_frames(duration, source_fps, target_fps, max(MIN_FRAMES, 2 * n_groups))
        groups = pair_frames(sampling)
    tau = (rope or RopeConfig()).tau
    tids = temporal_offsets([g.time for g in groups], tau)
    return VideoPlan(sampling, tuple(groups), grid, tuple(int(t) for t in tids))


_SEC_RE = re.compile(r"^(\d+)\.(\d)$")
_HMSF_RE = re.compile(r"^(\d{2,}):([0-5]\d):([0-5]\d):(\d{2,})$")


def format_timestamp(t: float, style: str = "sec", fps: float | None = None) -> str:
    """Render seconds as ``"12.5"`` (``sec``) or ``"HH:MM:SS:FF"`` (``hmsf``).

    >>> format_timestamp(3725.5, "hmsf", 30)
    '01:02:05:15'
    """
    if t < 0 or not math.isfinite(t):
        raise ValueError(f"timestamp must be finite and non-negative, got {t}")
    if style == "sec":
        return f"{t:.1f}"
    if style != "hmsf":
        raise ValueError(f"unknown timestamp style {style!r}")
    if fps is None or fps <= 0:
        raise ValueError("hmsf needs a positive fps")
    whole = math.floor(t)
    ff = round_half_up((t - whole) * fps)
    if ff >= fps:
        whole += 1
        ff = 0
    hours, rem = divmod(whole, 3600)
    minutes, seconds = divmod(rem, 60)
    return f"{hours:02d}:{minutes:02d}:{seconds:02d}:{ff:02d}"


def parse_timestamp(text: str, style: str = "sec", fps: float | None = None) -> float:
    """Inverse of :func:`format_timestamp`."""
    text = text.strip()
    if style == "sec":
        if not _SEC_RE.match(text):
            raise ValueError(f"malformed second timestamp {text!r}")
        return float(text)
    if style != "hmsf":
        raise ValueError(f"unknown timestamp style {style!r}")
    if fps is None or fps <= 0:
        raise ValueError("hmsf needs a positive fps")
    m = _HMSF_RE.match(text)
    if not m:
        raise ValueError(f"malformed hmsf timestamp {text!r}")
    h, mi, s, ff = (int(g) for g in m.groups())
    if ff >= fps:
        raise ValueError(f"frame field {ff} out of range for {fps} fps")
    return h * 3600 + mi * 60 + s + ff / fps

