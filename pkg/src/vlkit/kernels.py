"""Dense numeric primitives used by the vision encoder.

Everything here operates on float64 numpy arrays and is a pure function of
its inputs. Matrices follow the ``x @ W`` convention: a weight of shape
``(d_in, d_out)`` maps a ``d_in`` vector to a ``d_out`` vector.
"""

from __future__ import annotations

import numpy as np


def as_matrix(a, name: str = "array") -> np.ndarray:
    """Coerce ``a`` to a finite float64 array, raising ``ValueError`` otherwise."""
    arr = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    if x.shape[-1] != weight.shape[0]:
        raise ValueError(f"linear: input dim {x.shape[-1]} does not match weight {weight.shape}")
    out = x @ weight
    if bias is not None:
        out = out + bias
    return out


def silu(z: np.ndarray) -> np.ndarray:
    # x * sigmoid(x), written to avoid overflow in exp for large |x|
    z = np.asarray(z, dtype=np.float64)
    return z * 0.5 * (1.0 + np.tanh(0.5 * z))


def rms_norm(x, weight, eps: float = 1e-6) -> np.ndarray:
    """Root-mean-square normalisation over the last axis.

    ``out = x / sqrt(mean(x**2) + eps) * weight``. ``eps=0`` is accepted; an
    all-zero row with ``eps=0`` is returned as zeros rather than NaN.
    """
    x = as_matrix(x, "x")
    weight = as_matrix(weight, "weight")
    if x.ndim == 0 or x.shape[-1] < 1:
        raise ValueError("rms_norm needs at least one feature")
    if weight.shape != (x.shape[-1],):
        raise ValueError(f"rms_norm: weight shape {weight.shape} does not match feature dim {x.shape[-1]}")
    if eps < 0:
        raise ValueError("eps must be non-negative")
    ms = np.mean(x * x, axis=-1, keepdims=True) + eps
    denom = np.sqrt(ms)
    scaled = np.divide(x, denom, out=np.zeros_like(x), where=denom > 0)
    return scaled * weight


def swiglu_ffn(x, w_gate, w_up, w_down) -> np.ndarray:
    """Gated feed-forward: ``w_down(silu(x @ w_gate) * (x @ w_up))``."""
    x = as_matrix(x, "x")
    w_gate = as_matrix(w_gate, "w_gate")
    w_up = as_matrix(w_up, "w_up")
    w_down = as_matrix(w_down, "w_down")
    d = x.shape[-1]
    if w_gate.shape[0] != d or w_up.shape != w_gate.shape:
        raise ValueError(f"swiglu_ffn: gate {w_gate.shape} / up {w_up.shape} incompatible with d={d}")
    if w_down.shape != (w_gate.shape[1], d):
        raise ValueError(f"swiglu_ffn: down {w_down.shape} must be ({w_gate.shape[1]}, {d})")
    return linear(silu(linear(x, w_gate)) * linear(x, w_up), w_down)


def softmax(logits: np.ndarray) -> np.ndarray:
    # Max-subtraction only; no log-sum-exp tricks beyond that.
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def attention_probs(q: np.ndarray, k: np.ndarray) -> np.ndarray:
    return softmax(q @ k.T / np.sqrt(q.shape[-1]))


def full_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Unmasked scaled dot-product attention for one head, ``(n, dh)`` inputs."""
    return attention_probs(q, k) @ v


def segment_bounds(segments) -> list[tuple[int, int]]:
    """Return ``[(start, stop), ...]`` for each run of equal segment ids.

    Raises ``ValueError`` if a segment id reappears after another id, i.e.
    the segments are not contiguous under the current token order.
    """
    seg = np.asarray(segments)
    if seg.ndim != 1:
        raise ValueError("segments must be one-dimensional")
    n = seg.shape[0]
    if n == 0:
        return []
    cuts = np.flatnonzero(seg[1:] != seg[:-1]) + 1
    starts = np.concatenate([[0], cuts])
    stops = np.concatenate([cuts, [n]])
    ids = seg[starts]
    if len(np.unique(ids)) != len(ids):
        raise ValueError("segment ids are not contiguous")
    return [(int(a), int(b)) for a, b in zip(starts, stops)]


def segmented_attention(Q, K, V, segments) -> np.ndarray:
    """Attention restricted to contiguous segments of tokens.

    Each run of equal ids in ``segments`` is an independent attention
    problem; tokens never attend across runs. A single segment is exactly
    :func:`full_attention`.
    """
    Q = as_matrix(Q, "Q")
    K = as_matrix(K, "K")
    V = as_matrix(V, "V")
    if Q.ndim != 2 or Q.shape != K.shape or Q.shape[0] != V.shape[0]:
        raise ValueError(f"segmented_attention: shapes Q{Q.shape} K{K.shape} V{V.shape} are inconsistent")
    if Q.shape[1] < 1:
        raise ValueError("head dim must be positive")
    bounds = segment_bounds(segments)
    if (bounds[-1][1] if bounds else 0) != Q.shape[0]:
        raise ValueError("segments length does not match token count")
    out = np.empty((Q.shape[0], V.shape[1]), dtype=np.float64)
    for a, b in bounds:
        out[a:b] = full_attention(Q[a:b], K[a:b], V[a:b])
    return out
