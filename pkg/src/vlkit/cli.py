"""Command-line entry point: ``vlkit <command> ...``.

Every command prints one JSON document to stdout. On failure a JSON object
``{"error": ..., "message": ...}`` goes to stderr and the exit status is 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import docformat, encoder, geometry, grounding, packing, ppm, rope, videopipe


class CLIError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(message)


@dataclass(frozen=True)
class RunConfig:
    """Resolved knobs for one CLI run."""

    encoder: encoder.EncoderConfig
    tau: float = 2.0
    min_tokens: int = geometry.DEFAULT_MIN_TOKENS
    max_tokens: int = geometry.DEFAULT_MAX_TOKENS
    seed: int = 0

    @classmethod
    def from_preset(cls, name: str, **kw) -> "RunConfig":
        try:
            return cls(encoder.PRESETS[name.lower()], **kw)
        except KeyError:
            raise CLIError(f"unknown preset {name!r}; choose from {sorted(encoder.PRESETS)}") from None


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, ensure_ascii=False) + "\n")


def _r(x: float, nd: int = 9) -> float:
    # fixed rounding keeps reports stable across BLAS builds
    return round(float(x), nd) + 0.0


def _read_jsonl(path) -> list[dict]:
    rows = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if line.strip():
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CLIError(f"{path}:{n}: invalid JSON ({exc.msg})") from None
    return rows


def _range(a: np.ndarray) -> list[int]:
    return [int(a.min()), int(a.max())] if a.size else []


# -- commands ---------------------------------------------------------------

def cmd_preprocess_image(args) -> dict:
    pixels = ppm.read_ppm(args.path)
    h, w = pixels.shape[:2]
    grid = geometry.smart_resize(h, w, args.min_tokens, args.max_tokens)
    ids = rope.mrope_ids_image(0, grid.merged_h, grid.merged_w)
    return {
        **grid.to_dict(),
        "vit_tokens": geometry.vit_token_count(grid),
        "llm_tokens": geometry.llm_token_count(grid),
        "mrope": {"count": len(ids), "t": _range(ids.t), "h": _range(ids.h), "w": _range(ids.w), "next_start": ids.next_start},
    }


def _video_meta(frame_dir: Path) -> dict:
    meta_path = frame_dir / "meta.json"
    if not meta_path.is_file():
        raise CLIError(f"{frame_dir}: missing meta.json sidecar")
    meta = json.loads(meta_path.read_text())
    for key in ("source_fps", "duration"):
        if key not in meta:
            raise CLIError(f"{meta_path}: missing {key!r}")
    if "width" not in meta or "height" not in meta:
        frames = sorted(frame_dir.glob("*.ppm"))
        if not frames:
            raise CLIError(f"{frame_dir}: no width/height in meta.json and no .ppm frames")
        h, w = ppm.read_ppm(frames[0]).shape[:2]
        meta = {**meta, "height": h, "width": w}
    return meta


def cmd_preprocess_video(args) -> dict:
    meta = _video_meta(Path(args.frame_dir))
    cfg = rope.RopeConfig(tau=args.tau)
    plan = videopipe.plan_video(
        float(meta["duration"]), float(meta["source_fps"]), args.fps,
        int(meta["height"]), int(meta["width"]),
        max_frames=args.max_frames, max_tokens=args.max_tokens,
        frame_max_tokens=args.frame_max_tokens, rope=cfg,
    )
    return {
        "source_fps": float(meta["source_fps"]),
        "duration": float(meta["duration"]),
        "target_fps": args.fps,
        "effective_fps": _r(plan.sampling.effective_fps),
        "tau": args.tau,
        "n_frames": plan.n_frames,
        "frame_cap_hit": plan.sampling.capped,
        "timestamps": [_r(t) for t in plan.sampling.timestamps],
        "groups": len(plan.groups),
        "group_times": [_r(g.time) for g in plan.groups],
        "temporal_ids": list(plan.temporal_ids),
        **plan.grid.to_dict(),
        "tokens_per_group": plan.grid.tokens,
        "total_tokens": plan.total_tokens,
    }


def _write_tensor(stem: Path, arr: np.ndarray) -> None:
    data = np.ascontiguousarray(arr, dtype="<f8")
    stem.with_suffix(".bin").write_bytes(data.tobytes())
    meta = {"format": "vlkit-tensor", "dtype": "float64", "byteorder": "little", "shape": list(data.shape)}
    stem.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")


def cmd_forward(args) -> dict:
    run = RunConfig.from_preset(args.preset, seed=args.seed, max_tokens=args.max_tokens)
    cfg = run.encoder
    if args.weights:
        weights, saved = encoder.load_weights(args.weights)
        cfg = saved or cfg
        encoder.check_weights(cfg, weights)
    else:
        weights = encoder.init_weights(cfg, run.seed)
    pixels = ppm.read_ppm(args.input)
    h, w = pixels.shape[:2]
    grid = geometry.smart_resize(h, w, run.min_tokens, run.max_tokens)
    resized = ppm.resize_nearest(pixels, grid.resized_h, grid.resized_w)
    x = (resized.astype(np.float64) / 255.0 - 0.5) / 0.5
    tokens = encoder.encode(x, cfg, weights)
    report = {
        **grid.to_dict(),
        "config": cfg.to_dict(),
        "shape": list(tokens.shape),
        "mean": _r(tokens.mean()),
        "std": _r(tokens.std()),
        "min": _r(tokens.min()),
        "max": _r(tokens.max()),
    }
    if args.out:
        _write_tensor(Path(args.out), tokens)
        report["output"] = Path(args.out).with_suffix(".bin").name
    return report


def cmd_pack(args) -> dict:
    rows = _read_jsonl(args.jsonl)
    for n, r in enumerate(rows):
        if "id" not in r or not isinstance(r.get("length"), int):
            raise CLIError(f"{args.jsonl}: row {n} needs 'id' and integer 'length'")
    batch = packing.pack([r["length"] for r in rows], args.capacity, ids=[r["id"] for r in rows])
    report = packing.balance_report(batch)
    return {
        "capacity": batch.capacity,
        "bins": [{"ids": list(b.ids), "length": b.length, "fill": _r(b.length / batch.capacity)} for b in batch.bins],
        "stats": {
            "bins": report["bins"],
            "mean_fill": _r(report["mean_fill"]),
            "variance": _r(report["variance"]),
            "min_fill": _r(report["min_fill"]),
            "max_fill": _r(report["max_fill"]),
        },
    }


def cmd_parse_doc(args) -> dict:
    tree = docformat.parse_qwenvl_html(Path(args.html).read_text())
    if args.page:
        tree = docformat.DocTree(tree.elements, tuple(args.page))
    out = docformat.to_layout_json(tree)
    if args.validate:
        if tree.page_size is None:
            raise CLIError("--validate needs --page WIDTH HEIGHT")
        out["issues"] = [i.to_dict() for i in docformat.validate(tree)]
    return out


def _match_ious(pred: list, gold: list) -> list[float]:
    """Greedy one-to-one matching of same-label boxes by descending IoU; one score per gold box."""
    pred_boxes = [p for p in pred if isinstance(p, grounding.BBox)]
    cand = []
    for gi, g in enumerate(gold):
        for pi, p in enumerate(pred_boxes):
            if p.label == g.label:
                cand.append((-grounding.iou(p, g), gi, pi))
    cand.sort()
    scores = [0.0] * len(gold)
    used_g, used_p = set(), set()
    for neg, gi, pi in cand:
        if gi in used_g or pi in used_p:
            continue
        scores[gi] = -neg
        used_g.add(gi)
        used_p.add(pi)
    return scores


def cmd_eval_grounding(args) -> dict:
    preds = {r["id"]: r for r in _read_jsonl(args.pred)}
    golds = _read_jsonl(args.gold)
    ious: list[float] = []
    count_hits = count_total = failures = 0
    for g in golds:
        gold_objs = grounding.parse_spatial_output(json.dumps(g["objects"]), "json")
        gold_boxes = [o for o in gold_objs if isinstance(o, grounding.BBox)]
        rec = preds.get(g["id"])
        try:
            pred_objs = grounding.parse_spatial_output(rec["output"], args.format) if rec else []
        except grounding.GroundingParseError:
            pred_objs = []
            failures += 1
        if rec is None:
            failures += 1
        ious.extend(_match_ious(pred_objs, gold_boxes))
        for label in sorted({o.label for o in gold_objs}):
            count_total += 1
            count_hits += grounding.count_objects(pred_objs, label) == grounding.count_objects(gold_objs, label)
    n = len(ious)
    return {
        "samples": len(golds),
        "gold_boxes": n,
        "mean_iou": _r(sum(ious) / n) if n else 0.0,
        f"accuracy@{args.threshold}": _r(sum(s >= args.threshold for s in ious) / n) if n else 0.0,
        "count_accuracy": _r(count_hits / count_total) if count_total else 0.0,
        "parse_failures": failures,
    }


def _span(rec: dict) -> grounding.TimeSpan:
    return grounding.TimeSpan(float(rec["start"]), float(rec["end"]))


def cmd_eval_temporal(args) -> dict:
    preds = {r["id"]: r for r in _read_jsonl(args.pred)}
    pairs = []
    for g in _read_jsonl(args.gold):
        if g["id"] not in preds:
            raise CLIError(f"no prediction for id {g['id']!r}")
        pairs.append((_span(preds[g["id"]]), _span(g)))
    return {"n": len(pairs), "miou": _r(grounding.miou(pairs))}


# -- wiring -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vlkit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("preprocess-image", help="resize geometry and token counts for a P6 image")
    s.add_argument("path")
    s.add_argument("--min-tokens", type=int, default=geometry.DEFAULT_MIN_TOKENS)
    s.add_argument("--max-tokens", type=int, default=geometry.DEFAULT_MAX_TOKENS)
    s.set_defaults(func=cmd_preprocess_image)

    s = sub.add_parser("preprocess-video", help="frame sampling, grouping and temporal ids for a frame directory")
    s.add_argument("frame_dir")
    s.add_argument("--fps", type=float, default=2.0, help="target sampling rate")
    s.add_argument("--tau", type=float, default=2.0, help="temporal ids per second")
    s.add_argument("--max-frames", type=int, default=videopipe.MAX_FRAMES)
    s.add_argument("--max-tokens", type=int, default=videopipe.MAX_VIDEO_TOKENS)
    s.add_argument("--frame-max-tokens", type=int, default=geometry.DEFAULT_MAX_TOKENS)
    s.set_defaults(func=cmd_preprocess_video)

    s = sub.add_parser("forward", help="run the encoder on a P6 image")
    s.add_argument("input")
    s.add_argument("--weights", help="weight file stem (<stem>.bin + <stem>.json)")
    s.add_argument("--preset", default="toy", help="toy, 3b, 7b or 72b")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-tokens", type=int, default=geometry.DEFAULT_MAX_TOKENS)
    s.add_argument("--out", help="output tensor stem")
    s.set_defaults(func=cmd_forward)

    s = sub.add_parser("pack", help="first-fit-decreasing packing of a JSONL of {id, length}")
    s.add_argument("jsonl")
    s.add_argument("--capacity", type=int, default=packing.PRESET_CAPACITIES[0])
    s.set_defaults(func=cmd_pack)

    s = sub.add_parser("parse-doc", help="QwenVL HTML to layout JSON")
    s.add_argument("html")
    s.add_argument("--validate", action="store_true")
    s.add_argument("--page", type=int, nargs=2, metavar=("WIDTH", "HEIGHT"))
    s.set_defaults(func=cmd_parse_doc)

    s = sub.add_parser("eval-grounding", help="mean IoU, accuracy@threshold and count accuracy")
    s.add_argument("pred")
    s.add_argument("gold")
    s.add_argument("--format", choices=("json", "xml"), default="json")
    s.add_argument("--threshold", type=float, default=0.5)
    s.set_defaults(func=cmd_eval_grounding)

    s = sub.add_parser("eval-temporal", help="temporal mIoU")
    s.add_argument("pred")
    s.add_argument("gold")
    s.set_defaults(func=cmd_eval_temporal)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _emit(args.func(args))
        return 0
    except (CLIError, ValueError, KeyError, OSError, TypeError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        sys.stderr.write(json.dumps(err) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
