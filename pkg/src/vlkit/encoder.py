"""Toy-scale vision encoder: patch embedding, window layout, window/full attention blocks and the 2x2 merger.

Weights are plain ``dict[str, np.ndarray]``; :func:`weight_shapes` is the
single source of truth for names and shapes. On disk a weight set is a raw
little-endian float64 blob (``<stem>.bin``) plus a JSON sidecar
(``<stem>.json``) listing each tensor's name, shape and byte offset, and the
encoder config it was built for.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .rope import apply_rope_2d, rope2d_ids_vit

WEIGHTS_FORMAT = "vlkit-weights"
NORM_EPS = 1e-6


@dataclass(frozen=True)
class EncoderConfig:
    hidden: int
    layers: int
    heads: int
    intermediate: int
    patch: int = 14
    window: int = 112
    full_attn_layers: frozenset[int] = field(default_factory=frozenset)
    merger_out: int = 3584
    temporal_patch: int = 2
    channels: int = 3
    rope_theta: float = 10000.0

    def __post_init__(self):
        object.__setattr__(self, "full_attn_layers", frozenset(int(i) for i in self.full_attn_layers))
        if min(self.hidden, self.layers, self.heads, self.intermediate, self.patch, self.merger_out) < 1:
            raise ValueError("encoder sizes must be positive")
        if self.hidden % self.heads:
            raise ValueError(f"hidden {self.hidden} not divisible by heads {self.heads}")
        if (self.hidden // self.heads) % 4:
            raise ValueError("head dim must be divisible by 4 for 2D RoPE")
        if self.window < self.patch or self.window % self.patch:
            raise ValueError(f"window {self.window} must be a positive multiple of patch {self.patch}")
        bad = [i for i in self.full_attn_layers if not 0 <= i < self.layers]
        if bad:
            raise ValueError(f"full attention layer indices {sorted(bad)} outside [0, {self.layers})")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    @property
    def window_patches(self) -> int:
        return self.window // self.patch

    @property
    def patch_dim(self) -> int:
        return self.temporal_patch * self.patch * self.patch * self.channels

    @property
    def merger_hidden(self) -> int:
        return 4 * self.hidden

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["full_attn_layers"] = sorted(self.full_attn_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**{**d, "full_attn_layers": frozenset(d.get("full_attn_layers", ()))})


def _vit_preset(merger_out: int) -> EncoderConfig:
    return EncoderConfig(
        hidden=1280,
        layers=32,
        heads=16,
        intermediate=3456,
        patch=14,
        window=112,
        full_attn_layers=frozenset({7, 15, 23, 31}),
        merger_out=merger_out,
    )


PRESETS: dict[str, EncoderConfig] = {
    "3b": _vit_preset(2048),
    "7b": _vit_preset(3584),
    "72b": _vit_preset(8192),
    # desk-scale stand-in with the same structure: last layer of each pair is full attention
    "toy": EncoderConfig(
        hidden=32, layers=4, heads=2, intermediate=64, patch=14, window=112,
        full_attn_layers=frozenset({1, 3}), merger_out=48,
    ),
}


def all_full(config: EncoderConfig) -> EncoderConfig:
    """Copy of ``config`` in which every layer uses full attention."""
    return dataclasses.replace(config, full_attn_layers=frozenset(range(config.layers)))


def weight_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    h, m = config.hidden, config.intermediate
    shapes: dict[str, tuple[int, ...]] = {
        "patch_embed.weight": (config.patch_dim, h),
        "patch_embed.bias": (h,),
    }
    for i in range(config.layers):
        p = f"blocks.{i}."
        shapes.update({
            p + "norm1": (h,),
            p + "qkv.weight": (h, 3 * h),
            p + "qkv.bias": (3 * h,),
            p + "proj.weight": (h, h),
            p + "proj.bias": (h,),
            p + "norm2": (h,),
            p + "mlp.gate": (h, m),
            p + "mlp.up": (h, m),
            p + "mlp.down": (m, h),
        })
    shapes.update({
        "merger.fc1.weight": (4 * h, config.merger_hidden),
        "merger.fc1.bias": (config.merger_hidden,),
        "merger.fc2.weight": (config.merger_hidden, config.merger_out),
        "merger.fc2.bias": (config.merger_out,),
    })
    return shapes


def init_weights(config: EncoderConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Seeded uniform(-0.02, 0.02) weights; RMSNorm scales start at one."""
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in weight_shapes(config).items():
        if name.endswith(("norm1", "norm2")):
            weights[name] = np.ones(shape)
        else:
            weights[name] = rng.uniform(-0.02, 0.02, size=shape)
    return weights


def check_weights(config: EncoderConfig, weights: dict[str, np.ndarray]) -> None:
    expected = weight_shapes(config)
    missing = sorted(set(expected) - set(weights))
    if missing:
        raise ValueError(f"missing weights: {missing[:5]}{'...' if len(missing) > 5 else ''}")
    for name, shape in expected.items():
        if tuple(weights[name].shape) != shape:
            raise ValueError(f"weight {name} has shape {weights[name].shape}, expected {shape}")


def save_weights(path, weights: dict[str, np.ndarray], config: EncoderConfig | None = None) -> tuple[Path, Path]:
    """Write ``<stem>.bin`` and its ``<stem>.json`` sidecar; returns both paths."""
    path = Path(path)
    bin_path, meta_path = path.with_suffix(".bin"), path.with_suffix(".json")
    tensors = []
    offset = 0
    with open(bin_path, "wb") as fh:
        for name, arr in weights.items():
            data = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(data.tobytes())
            tensors.append({"name": name, "shape": list(data.shape), "offset": offset})
            offset += data.nbytes
    meta = {
        "format": WEIGHTS_FORMAT,
        "version": 1,
        "dtype": "float64",
        "byteorder": "little",
        "config": config.to_dict() if config is not None else None,
        "tensors": tensors,
    }
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return bin_path, meta_path


def load_weights(path) -> tuple[dict[str, np.ndarray], EncoderConfig | None]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    if meta.get("format") != WEIGHTS_FORMAT:
        raise ValueError(f"{path}: not a {WEIGHTS_FORMAT} sidecar")
    blob = path.with_suffix(".bin").read_bytes()
    weights = {}
    for t in meta["tensors"]:
        count = int(np.prod(t["shape"], dtype=np.int64))
        end = t["offset"] + 8 * count
        if end > len(blob):
            raise ValueError(f"{path}: tensor {t['name']} runs past end of data")
        weights[t["name"]] = np.frombuffer(blob, dtype="<f8", count=count, offset=t["offset"]).reshape(t["shape"]).astype(np.float64)
    config = EncoderConfig.from_dict(meta["config"]) if meta.get("config") else None
    return weights, config


@dataclass(frozen=True)
class WindowLayout:
    """Assignment of patches (row-major) to attention windows.

    ``order[k]`` is the patch index at window-order position ``k`` and
    ``inverse[p]`` is the window-order position of patch ``p``;
    ``segments[p]`` is the window id of patch ``p``.
    """

    grid_h: int
    grid_w: int
    segments: np.ndarray
    order: np.ndarray
    inverse: np.ndarray
    window_sizes: tuple[int, ...]

    @property
    def segments_in_window_order(self) -> np.ndarray:
        return self.segments[self.order]

    def permuted(self, perm) -> "WindowLayout":
        """Layout for features re-indexed as ``new[j] = old[perm[j]]``."""
        perm = np.asarray(perm)
        inv_perm = np.empty_like(perm)
        inv_perm[perm] = np.arange(perm.size)
        order = inv_perm[self.order]
        inverse = np.empty_like(order)
        inverse[order] = np.arange(order.size)
        return dataclasses.replace(self, segments=self.segments[perm], order=order, inverse=inverse)


def _bands(n: int, size: int) -> list[tuple[int, int]]:
    return [(a, min(a + size, n)) for a in range(0, n, size)]


def window_partition(grid_h: int, grid_w: int, window_patches: int = 8) -> WindowLayout:
    """Split the patch grid into windows of at most ``window_patches`` square, without padding.

    Trailing rows/columns that do not fill a whole band form smaller windows.
    Windows are numbered row-major; patches inside a window stay row-major.
    """
    if grid_h < 1 or grid_w < 1 or window_patches < 1:
        raise ValueError("grid dims and window size must be >= 1")
    segments = np.empty(grid_h * grid_w, dtype=np.int64)
    order = []
    sizes = []
    wid = 0
    for r0, r1 in _bands(grid_h, window_patches):
        for c0, c1 in _bands(grid_w, window_patches):
            idx = (np.arange(r0, r1)[:, None] * grid_w + np.arange(c0, c1)[None, :]).ravel()
            segments[idx] = wid
            order.append(idx)
            sizes.append(idx.size)
            wid += 1
    order = np.concatenate(order)
    inverse = np.empty_like(order)
    inverse[order] = np.arange(order.size)
    return WindowLayout(grid_h, grid_w, segments, order, inverse, tuple(sizes))


def patch_embed(frames, weights: dict[str, np.ndarray], config: EncoderConfig) -> np.ndarray:
    """Embed one image or a pair of video frames into a ``(grid_h, grid_w, hidden)`` grid.

    ``frames`` is an ``(H, W, C)`` array or a sequence of one or two of them.
    A single frame is duplicated to fill the two-frame temporal patch, so a
    static image and two identical frames embed identically.
    """
    if isinstance(frames, np.ndarray) and frames.ndim == 3:
        frames = [frames]
    frames = [np.asarray(f, dtype=np.float64) for f in frames]
    if not 1 <= len(frames) <= config.temporal_patch:
        raise ValueError(f"expected 1..{config.temporal_patch} frames, got {len(frames)}")
    shape = frames[0].shape
    if any(f.shape != shape for f in frames):
        raise ValueError("frames in a temporal group must share one size")
    H, W, C = shape
    p = config.patch
    if C != config.channels or H % p or W % p:
        raise ValueError(f"frame shape {shape} incompatible with patch {p} and {config.channels} channels")
    while len(frames) < config.temporal_patch:
        frames.append(frames[-1])
    gh, gw = H // p, W // p
    x = np.stack(frames)  # (T, H, W, C)
    x = x.reshape(config.temporal_patch, gh, p, gw, p, C).transpose(1, 3, 0, 2, 4, 5)
    x = x.reshape(gh, gw, config.patch_dim)
    return kernels.linear(x, weights["patch_embed.weight"], weights["patch_embed.bias"])


def _attention_block(x, seg, rc_ids, weights, prefix, config):
    n = x.shape[0]
    h = kernels.rms_norm(x, weights[prefix + "norm1"], NORM_EPS)
    qkv = kernels.linear(h, weights[prefix + "qkv.weight"], weights[prefix + "qkv.bias"])
    q, k, v = np.split(qkv, 3, axis=-1)
    dh = config.head_dim
    heads = []
    for i in range(config.heads):
        sl = slice(i * dh, (i + 1) * dh)
        qi = apply_rope_2d(q[:, sl], rc_ids, config.rope_theta)
        ki = apply_rope_2d(k[:, sl], rc_ids, config.rope_theta)
        heads.append(kernels.segmented_attention(qi, ki, v[:, sl], seg))
    attn = np.concatenate(heads, axis=-1) if heads else np.zeros((n, 0))
    return x + kernels.linear(attn, weights[prefix + "proj.weight"], weights[prefix + "proj.bias"])


def _ffn_block(x, weights, prefix):
    h = kernels.rms_norm(x, weights[prefix + "norm2"], NORM_EPS)
    return x + kernels.swiglu_ffn(h, weights[prefix + "mlp.gate"], weights[prefix + "mlp.up"], weights[prefix + "mlp.down"])


def vit_forward(features, layout: WindowLayout, vit_ids, config: EncoderConfig, weights: dict[str, np.ndarray]) -> np.ndarray:
    """Run the pre-norm transformer stack over patch features.

    Args:
        features: ``(grid_h, grid_w, hidden)`` or ``(n, hidden)`` patch
            features in patch (row-major) order.
        layout: window assignment for the same patches.
        vit_ids: ``(n, 2)`` global (row, col) ids for 2D RoPE.
        config: encoder config; layers in ``full_attn_layers`` attend over
            the whole image, all others only within their window.
        weights: as produced by :func:`init_weights`.

    Returns:
        Features with the same shape and patch order as ``features``.
    """
    x = kernels.as_matrix(features, "features")
    in_shape = x.shape
    x = x.reshape(-1, in_shape[-1])
    n = x.shape[0]
    if in_shape[-1] != config.hidden:
        raise ValueError(f"feature dim {in_shape[-1]} != hidden {config.hidden}")
    if layout.order.size != n:
        raise ValueError(f"layout covers {layout.order.size} patches, features have {n}")
    rc = np.asarray(vit_ids)
    if rc.shape != (n, 2):
        raise ValueError(f"vit_ids shape {rc.shape} != ({n}, 2)")
    check_weights(config, weights)

    xw = x[layout.order]
    rc_w = rc[layout.order]
    window_seg = layout.segments_in_window_order
    full_seg = np.zeros(n, dtype=np.int64)
    for i in range(config.layers):
        prefix = f"blocks.{i}."
        seg = full_seg if i in config.full_attn_layers else window_seg
        xw = _attention_block(xw, seg, rc_w, weights, prefix, config)
        xw = _ffn_block(xw, weights, prefix)
    out = np.empty_like(xw)
    out[layout.order] = xw
    return out.reshape(in_shape)


def merge_patches(features, weights: dict[str, np.ndarray]) -> np.ndarray:
    """Concatenate each 2x2 patch block and project it through a two-layer MLP.

    Block order inside the concatenation is (0,0), (0,1), (1,0), (1,1). The
    activation between the two layers is SiLU.
    """
    x = kernels.as_matrix(features, "features")
    if x.ndim != 3:
        raise ValueError("merge_patches expects a (grid_h, grid_w, hidden) grid")
    gh, gw, hid = x.shape
    if gh % 2 or gw % 2:
        raise ValueError(f"grid {gh}x{gw} must have even dims to merge 2x2 blocks")
    x = x.reshape(gh // 2, 2, gw // 2, 2, hid).transpose(0, 2, 1, 3, 4).reshape(gh // 2, gw // 2, 4 * hid)
    h = kernels.silu(kernels.linear(x, weights["merger.fc1.weight"], weights["merger.fc1.bias"]))
    return kernels.linear(h, weights["merger.fc2.weight"], weights["merger.fc2.bias"])


def encode(frames, config: EncoderConfig, weights: dict[str, np.ndarray]) -> np.ndarray:
    """Full image/frame-pair path: embed, window layout, ViT stack, merge."""
    feats = patch_embed(frames, weights, config)
    gh, gw, _ = feats.shape
    layout = window_partition(gh, gw, config.window_patches)
    out = vit_forward(feats, layout, rope2d_ids_vit(gh, gw), config, weights)
    return merge_patches(out, weights)
