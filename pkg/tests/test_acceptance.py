"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with pytest (the summary is printed at the end of the session) or
directly: ``python tests/test_acceptance.py``.
"""

import json
import math
import os
import subprocess
import sys
import tempfile
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cli_cases import GOLDEN  # noqa: E402
from vlkit.docformat import DocFormatError, KINDS, parse_qwenvl_html, serialize_qwenvl_html  # noqa: E402
from vlkit.encoder import EncoderConfig, all_full, init_weights, vit_forward, window_partition  # noqa: E402
from vlkit.geometry import llm_token_count, smart_resize, vit_token_count  # noqa: E402
from vlkit.grounding import BBox, TimeSpan, iou, iou_matrix, miou, temporal_iou  # noqa: E402
from vlkit.packing import PRESET_CAPACITIES, pack  # noqa: E402
from vlkit.rope import RopeConfig, apply_mrope, mrope_ids_text, mrope_ids_video, rope2d_ids_vit, temporal_offsets  # noqa: E402
from vlkit.videopipe import MAX_FRAMES, MAX_VIDEO_TOKENS, plan_video, sample_frames  # noqa: E402

HERE = Path(__file__).parent
DOCS = HERE / "fixtures" / "docformat"

RESULTS: dict[int, tuple[bool, str]] = {}


def record(n: int, title: str, ok: bool, detail: str) -> None:
    RESULTS[n] = (ok, f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
    print(RESULTS[n][1])


def random_toy_config(rng, window_patches, full_layers=None):
    while True:
        hidden = int(rng.choice([8, 16, 24, 32]))
        heads = int(rng.choice([1, 2, 4]))
        if hidden % heads == 0 and (hidden // heads) % 4 == 0:
            break
    layers = int(rng.integers(1, 5))
    if full_layers is None:
        full_layers = {int(i) for i in range(layers) if rng.random() < 0.4}
    return EncoderConfig(
        hidden=hidden, layers=layers, heads=heads, intermediate=int(rng.integers(8, 65)),
        window=14 * window_patches, full_attn_layers=full_layers, merger_out=8,
    )


# 1 -------------------------------------------------------------------------

def criterion_1():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    n = 25
    for _ in range(n):
        gh, gw = int(rng.integers(1, 13)), int(rng.integers(1, 13))
        cfg = random_toy_config(rng, window_patches=int(rng.integers(max(gh, gw), 13)))
        w = init_weights(cfg, int(rng.integers(1 << 30)))
        x = rng.normal(size=(gh, gw, cfg.hidden))
        ids = rope2d_ids_vit(gh, gw)
        lay = window_partition(gh, gw, cfg.window_patches)
        assert len(lay.window_sizes) == 1
        a = vit_forward(x, lay, ids, cfg, w)
        b = vit_forward(x, lay, ids, all_full(cfg), w)
        worst = max(worst, float(np.max(np.abs(a - b))))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-7 and dt < 10
    record(1, "window>=grid equals full attention", ok, f"{n} configs, max |diff| {worst:.2e} (<= 1e-7), {dt:.2f}s (< 10s)")
    return ok


# 2 -------------------------------------------------------------------------

def criterion_2():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = 0.0
    checked = 0
    for _ in range(8):
        gh, gw = int(rng.integers(3, 13)), int(rng.integers(3, 13))
        wp = int(rng.integers(2, 5))
        cfg = random_toy_config(rng, window_patches=wp, full_layers=set())
        w = init_weights(cfg, int(rng.integers(1 << 30)))
        x = rng.normal(size=(gh * gw, cfg.hidden))
        lay = window_partition(gh, gw, wp)
        ids = rope2d_ids_vit(gh, gw)
        base = vit_forward(x, lay, ids, cfg, w)
        for s in np.unique(lay.segments):
            inside = lay.segments == s
            z = np.where(inside[:, None], x, 0.0)
            out = vit_forward(z, lay, ids, cfg, w)
            worst = max(worst, float(np.max(np.abs(out[inside] - base[inside]))))
            checked += 1
    dt = time.perf_counter() - t0
    ok = worst < 1e-9 and dt < 5
    record(2, "window locality", ok, f"{checked} windows, max |diff| {worst:.2e} (< 1e-9), {dt:.2f}s (< 5s)")
    return ok


# 3 -------------------------------------------------------------------------

def classic_rope(x, pos, base=10000.0):
    # rotate-half convention written with complex numbers
    d = x.shape[-1]
    half = d // 2
    inv = base ** (-np.arange(0, d, 2) / d)
    z = (x[..., :half] + 1j * x[..., half:]) * np.exp(1j * pos[..., None] * inv)
    return np.concatenate([z.real, z.imag], axis=-1)


def criterion_3():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        d = int(rng.choice([8, 16, 32, 64, 128]))
        cfg = RopeConfig(head_dim=d)
        n = int(rng.integers(2, 24))
        start = int(rng.integers(0, 5000))
        ids = mrope_ids_text(start, n)
        q, k = rng.normal(size=(2, n, d))
        mq, mk = apply_mrope(q, ids.ids, cfg), apply_mrope(k, ids.ids, cfg)
        pos = np.arange(start, start + n, dtype=np.float64)
        cq, ck = classic_rope(q, pos), classic_rope(k, pos)
        worst = max(worst, float(np.max(np.abs(mq @ mk.T - cq @ ck.T) / math.sqrt(d))))
    ok = worst <= 1e-9
    record(3, "MRoPE text ids equal 1D RoPE", ok, f"100 cases, max logit |diff| {worst:.2e} (<= 1e-9)")
    return ok


# 4 -------------------------------------------------------------------------

def criterion_4():
    rng = np.random.default_rng(4)
    cfg = RopeConfig()
    worst = 0.0
    for _ in range(1000):
        q, k = rng.normal(size=(2, cfg.head_dim))
        a = rng.integers(0, 2000, size=3)
        b = rng.integers(0, 2000, size=3)
        shift = rng.integers(0, 50000, size=3)
        ref = apply_mrope(q, a, cfg) @ apply_mrope(k, b, cfg)
        moved = apply_mrope(q, a + shift, cfg) @ apply_mrope(k, b + shift, cfg)
        worst = max(worst, abs(float(ref - moved)))
    ok = worst <= 1e-6
    record(4, "relative-position invariance", ok, f"1000 trials, max |diff| {worst:.2e} (<= 1e-6)")
    return ok


# 5 -------------------------------------------------------------------------

def criterion_5():
    mismatches = 0
    shared_total = 0
    for tau in (1.0, 2.0, 4.0):
        cfg = RopeConfig(tau=tau)
        frame_ids, group_ids = {}, {}
        for fps in (0.5, 1.0, 2.0):
            s = sample_frames(60, 30, fps)
            frame_ids[fps] = dict(zip(s.timestamps, temporal_offsets(s.timestamps, tau).tolist()))
            v = mrope_ids_video(0, s.group_times, 1, 1, cfg)
            group_ids[fps] = dict(zip(s.group_times, v.t.tolist()))
        for table in (frame_ids, group_ids):
            for a, b in ((0.5, 1.0), (0.5, 2.0), (1.0, 2.0)):
                shared = set(table[a]) & set(table[b])
                shared_total += len(shared)
                mismatches += sum(table[a][t] != table[b][t] for t in shared)
    ok = mismatches == 0 and shared_total > 0
    record(5, "absolute-time alignment", ok, f"{shared_total} shared timestamps over tau in {{1,2,4}}, {mismatches} mismatches")
    return ok


# 6 -------------------------------------------------------------------------

def criterion_6():
    g = smart_resize(112, 112)
    vit, llm = vit_token_count(g), llm_token_count(g)
    windows = window_partition(g.grid_h, g.grid_w, 112 // 14).window_sizes
    ok = (vit, llm, windows) == (64, 16, (64,))
    record(6, "112x112 token arithmetic", ok, f"{vit} ViT patches, {llm} LLM tokens, windows {list(windows)}")
    return ok


# 7 -------------------------------------------------------------------------

def criterion_7():
    rng = np.random.default_rng(7)
    worst_frames = worst_tokens = 0
    for _ in range(1000):
        duration = float(np.exp(rng.uniform(np.log(0.1), np.log(3 * 3600))))
        p = plan_video(
            duration, float(rng.choice([24, 25, 29.97, 30, 60])), float(rng.uniform(0.1, 8)),
            int(rng.integers(1, 4097)), int(rng.integers(1, 4097)),
        )
        worst_frames = max(worst_frames, p.n_frames)
        worst_tokens = max(worst_tokens, p.total_tokens)
    ok = worst_frames <= MAX_FRAMES and worst_tokens <= MAX_VIDEO_TOKENS
    record(7, "video caps", ok, f"1000 plans, max frames {worst_frames} (<= 768), max tokens {worst_tokens} (<= 24576)")
    return ok


# 8 -------------------------------------------------------------------------

def optimal_bins(lengths, capacity):
    # exact minimum bin count by subset dynamic programming
    n = len(lengths)
    full = (1 << n) - 1
    best = [(n + 1, 0)] * (1 << n)
    best[0] = (0, 0)  # (bins used, free space in the last opened bin)
    for mask in range(1 << n):
        used, free = best[mask]
        if used > n:
            continue
        for i in range(n):
            if mask >> i & 1:
                continue
            li = lengths[i]
            cand = (used, free - li) if li <= free else (used + 1, capacity - li)
            nm = mask | 1 << i
            cur = best[nm]
            if cand[0] < cur[0] or (cand[0] == cur[0] and cand[1] > cur[1]):
                best[nm] = cand
    return best[full][0]


def criterion_8():
    rng = np.random.default_rng(8)
    t0 = time.perf_counter()
    violations = small = brute = worse = 0
    for _ in range(100_000):
        if rng.random() < 0.1:
            cap = int(rng.choice(PRESET_CAPACITIES))
        else:
            cap = int(rng.integers(1, 200))
        n = int(rng.integers(0, 11)) if rng.random() < 0.8 else int(rng.integers(11, 40))
        lengths = rng.integers(1, cap + 1, size=n).tolist()
        b = pack(lengths, cap)
        ids = sorted(i for x in b.bins for i in x.ids)
        if ids != list(range(n)) or any(x.length > cap or x.length != sum(lengths[i] for i in x.ids) for x in b.bins):
            violations += 1
        if n <= 10:
            small += 1
            lower = max(math.ceil(sum(lengths) / cap), sum(2 * v > cap for v in lengths))
            if len(b) > lower + 1:
                brute += 1
                if len(b) > optimal_bins(lengths, cap) + 1:
                    worse += 1
    presets_ok = all(len(pack([c, c // 2, c // 2, 1], c)) == 3 for c in PRESET_CAPACITIES) and PRESET_CAPACITIES == (8192, 32768)
    dt = time.perf_counter() - t0
    ok = violations == 0 and worse == 0 and presets_ok and dt < 60
    record(
        8, "packing", ok,
        f"1e5 instances, {violations} violations; {small} with <= 10 items, {brute} sent to brute force, "
        f"{worse} above OPT+1; presets {'ok' if presets_ok else 'REJECTED'}; {dt:.1f}s (< 60s)",
    )
    return ok


# 9 -------------------------------------------------------------------------

def _all_boxes(size):
    return np.array([(x1, y1, x2, y2)
                     for x1 in range(size) for x2 in range(x1 + 1, size + 1)
                     for y1 in range(size) for y2 in range(y1 + 1, size + 1)], dtype=np.int64)


def _raster_words(boxes, size):
    # each box as a size*size-bit pixel set packed into uint64 words
    ys, xs = np.mgrid[0:size, 0:size]
    masks = ((xs[None] >= boxes[:, 0, None, None]) & (xs[None] < boxes[:, 2, None, None])
             & (ys[None] >= boxes[:, 1, None, None]) & (ys[None] < boxes[:, 3, None, None]))
    packed = np.packbits(masks.reshape(len(boxes), -1), axis=1)
    return packed.view(np.uint64)


def criterion_9():
    size = 16
    boxes = _all_boxes(size)
    words = _raster_words(boxes, size)
    n = len(boxes)
    bad = 0
    chunk = 48
    for s in range(0, n, chunk):
        a = words[s:s + chunk]
        inter = np.bitwise_count(a[:, None, :] & words[None, :, :]).sum(axis=2, dtype=np.int64)
        union = np.bitwise_count(a[:, None, :] | words[None, :, :]).sum(axis=2, dtype=np.int64)
        oracle = inter / union
        bad += int(np.count_nonzero(iou_matrix(boxes[s:s + chunk], boxes) != oracle))
    # the scalar path against the same oracle on a random sample
    rng = np.random.default_rng(9)
    i, j = rng.integers(0, n, size=(2, 20000))
    inter = np.bitwise_count(words[i] & words[j]).sum(axis=1, dtype=np.int64)
    union = np.bitwise_count(words[i] | words[j]).sum(axis=1, dtype=np.int64)
    scalar_bad = sum(iou(BBox(*boxes[a]), BBox(*boxes[b])) != c / u for a, b, c, u in zip(i, j, inter, union))
    ok = bad == 0 and scalar_bad == 0
    record(9, "IoU equals pixel oracle", ok, f"{n * n} box pairs in 16x16 exhaustive, {bad} mismatches; scalar sample {scalar_bad} mismatches")
    return ok


# 10 ------------------------------------------------------------------------

# (pred, gold, IoU worked out by hand as overlap / hull length)
TEMPORAL_FIXTURE = [
    ((0, 10), (5, 15), Fraction(5, 15)),
    ((0, 10), (0, 10), Fraction(1)),
    ((0, 4), (6, 9), Fraction(0)),
    ((2, 8), (0, 10), Fraction(6, 10)),
    ((1.5, 3.5), (2.5, 4.5), Fraction(1, 3)),
    ((0, 1), (1, 2), Fraction(0)),
    ((10, 30), (15, 20), Fraction(5, 20)),
    ((3, 7), (4, 9), Fraction(3, 6)),
    ((0.25, 0.75), (0.5, 1.0), Fraction(1, 3)),
    ((100, 160), (130, 190), Fraction(30, 90)),
]


def criterion_10():
    pairs = [(TimeSpan(*p), TimeSpan(*g)) for p, g, _ in TEMPORAL_FIXTURE]
    worst = max(abs(temporal_iou(p, g) - float(want)) for (p, g), (_, _, want) in zip(pairs, TEMPORAL_FIXTURE))
    expected = float(sum(w for _, _, w in TEMPORAL_FIXTURE) / len(TEMPORAL_FIXTURE))
    got = miou(pairs)
    ok = worst <= 1e-9 and abs(got - expected) <= 1e-9
    record(10, "temporal mIoU anchor", ok, f"10 pairs, max per-pair |diff| {worst:.1e}, mIoU {got:.12f} vs {expected:.12f}")
    return ok


# 11 ------------------------------------------------------------------------

ERROR_CLASSES = {
    "malformed bbox": "malformed data-bbox",
    "unknown element class": "unknown",
    "missing format attribute": "missing format=",
    "unclosed tag": "unclosed",
}


def criterion_11():
    accepted = sorted((DOCS / "accept").glob("*.html"))
    not_identical = []
    kinds = set()
    for p in accepted:
        text = p.read_text(encoding="utf-8")
        tree = parse_qwenvl_html(text)
        kinds |= {e.kind for e in tree.elements}
        if serialize_qwenvl_html(tree) != text:
            not_identical.append(p.name)
    per_class = dict.fromkeys(ERROR_CLASSES, 0)
    accepted_bad = []
    for p in sorted((DOCS / "reject").glob("*.html")):
        try:
            parse_qwenvl_html(p.read_text(encoding="utf-8"))
            accepted_bad.append(p.name)
        except DocFormatError as exc:
            for cls, needle in ERROR_CLASSES.items():
                if needle in str(exc):
                    per_class[cls] += 1
    ok = (not not_identical and kinds == set(KINDS) and (DOCS / "accept" / "skeleton.html").exists()
          and not accepted_bad and all(per_class.values()))
    record(
        11, "QwenVL HTML round trip", ok,
        f"{len(accepted)} fixtures byte-identical except {not_identical}, {len(kinds)}/8 kinds; "
        f"rejections per class {per_class}; wrongly accepted {accepted_bad}",
    )
    return ok


# 12 ------------------------------------------------------------------------

_SUITE_SCRIPT = """
import json, sys
from pathlib import Path
sys.path.insert(0, sys.argv[1])
from cli_cases import run_suite
print(json.dumps(run_suite(Path(sys.argv[2]))))
"""


def criterion_12():
    runs = []
    for seed in ("1", "2"):
        with tempfile.TemporaryDirectory() as tmp:
            env = {**os.environ, "PYTHONHASHSEED": seed}
            proc = subprocess.run(
                [sys.executable, "-c", _SUITE_SCRIPT, str(HERE), str(Path(tmp) / "work")],
                capture_output=True, text=True, env=env, check=False,
            )
            if proc.returncode != 0:
                record(12, "CLI determinism", False, f"suite run failed: {proc.stderr.strip()[-300:]}")
                return False
            runs.append(json.loads(proc.stdout))
    differing = sorted(k for k in runs[0] if runs[0][k] != runs[1].get(k))
    golden_diff = sorted(k for k in runs[0] if not (GOLDEN / f"{k}.txt").exists() or (GOLDEN / f"{k}.txt").read_text() != runs[0][k])
    ok = not differing and not golden_diff and runs[0].keys() == runs[1].keys()
    record(12, "CLI determinism", ok, f"{len(runs[0])} golden outputs, differing between runs {differing}, differing from golden {golden_diff}")
    return ok


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12]


@pytest.mark.parametrize("check", CRITERIA, ids=lambda f: f.__name__)
def test_criterion(check):
    assert check()


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
