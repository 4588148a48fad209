"""Absolute-coordinate boxes, points and time spans; IoU metrics; JSON/XML grounding formats.

Coordinates are pixels in the model-input (resized) image unless stated
otherwise. Box area uses the continuous convention ``(x2-x1)*(y2-y1)``,
which for integer boxes equals the pixel count of the half-open raster
``[x1, x2) x [y1, y2)``.

Wire formats::

    JSON: [{"bbox_2d":[x1,y1,x2,y2],"label":"cat"},{"point_2d":[x,y],"label":"knob"}]
    XML:  <objects><box label="cat">x1 y1 x2 y2</box><point label="knob">x y</point></objects>
"""

from __future__ import annotations

import html
import json
import re
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .geometry import round_half_up


class GroundingParseError(ValueError):
    pass


def _num(v):
    # ints stay ints so that serialisation is byte-stable
    if isinstance(v, bool):
        raise TypeError("boolean is not a coordinate")
    if isinstance(v, (int, np.integer)):
        return int(v)
    f = float(v)
    return int(f) if f.is_integer() else f


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float
    label: str = ""

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            object.__setattr__(self, name, _num(getattr(self, name)))
        if self.x1 < 0 or self.y1 < 0:
            raise ValueError(f"box {self.coords} has negative coordinates")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"box {self.coords} is degenerate: need x1 < x2 and y1 < y2")

    @property
    def coords(self) -> tuple:
        return (self.x1, self.y1, self.x2, self.y2)

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def within(self, width: float, height: float) -> bool:
        return self.x2 <= width and self.y2 <= height

    def contains(self, other: "BBox") -> bool:
        return self.x1 <= other.x1 and self.y1 <= other.y1 and other.x2 <= self.x2 and other.y2 <= self.y2


@dataclass(frozen=True)
class Point:
    x: float
    y: float
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "x", _num(self.x))
        object.__setattr__(self, "y", _num(self.y))
        if self.x < 0 or self.y < 0:
            raise ValueError(f"point ({self.x}, {self.y}) has negative coordinates")

    def within(self, width: float, height: float) -> bool:
        return self.x <= width and self.y <= height


@dataclass(frozen=True)
class TimeSpan:
    start: float
    end: float

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"time span [{self.start}, {self.end}] needs 0 <= start < end")


Spatial = Union[BBox, Point]


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise IoU for ``(N, 4)`` and ``(M, 4)`` coordinate arrays, shape ``(N, M)``."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    iw = np.clip(np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0, None)
    ih = np.clip(np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0, None)
    inter = iw * ih
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def temporal_iou(a: TimeSpan, b: TimeSpan) -> float:
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter <= 0:
        return 0.0
    return inter / (max(a.end, b.end) - min(a.start, b.start))


def miou(pairs: Iterable[tuple[TimeSpan, TimeSpan]]) -> float:
    """Mean temporal IoU over ``(prediction, ground_truth)`` pairs."""
    scores = [temporal_iou(p, g) for p, g in pairs]
    if not scores:
        raise ValueError("miou of an empty pair list is undefined")
    return sum(scores) / len(scores)


def rescale_box(b: BBox, src: tuple[int, int], dst: tuple[int, int]) -> BBox:
    """Map a box between two image frames given as ``(width, height)``.

    Each axis scales linearly; results round half up to whole pixels and are
    clamped to the destination frame.
    """
    (sw, sh), (dw, dh) = src, dst
    if min(sw, sh, dw, dh) <= 0:
        raise ValueError("frame sizes must be positive")
    fx, fy = dw / sw, dh / sh

    def sx(v):
        return min(max(round_half_up(v * fx), 0), dw)

    def sy(v):
        return min(max(round_half_up(v * fy), 0), dh)

    x1, y1, x2, y2 = sx(b.x1), sy(b.y1), sx(b.x2), sy(b.y2)
    if x1 >= x2 or y1 >= y2:
        raise ValueError(f"box {b.coords} collapses to [{x1}, {y1}, {x2}, {y2}] in a {dw}x{dh} frame")
    return BBox(x1, y1, x2, y2, b.label)


def count_objects(objects: Iterable[Spatial], label: str) -> int:
    return sum(1 for o in objects if o.label == label)


# -- serialisation ----------------------------------------------------------

def _to_record(o: Spatial) -> dict:
    if isinstance(o, BBox):
        return {"bbox_2d": list(o.coords), "label": o.label}
    if isinstance(o, Point):
        return {"point_2d": [o.x, o.y], "label": o.label}
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _from_record(rec) -> Spatial:
    if not isinstance(rec, dict):
        raise GroundingParseError(f"expected an object, got {type(rec).__name__}")
    label = rec.get("label", "")
    if not isinstance(label, str):
        raise GroundingParseError("label must be a string")
    try:
        if "bbox_2d" in rec:
            c = rec["bbox_2d"]
            if not isinstance(c, list) or len(c) != 4:
                raise GroundingParseError(f"bbox_2d needs 4 coordinates, got {c!r}")
            return BBox(*c, label=label)
        if "point_2d" in rec:
            c = rec["point_2d"]
            if not isinstance(c, list) or len(c) != 2:
                raise GroundingParseError(f"point_2d needs 2 coordinates, got {c!r}")
            return Point(*c, label=label)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, GroundingParseError):
            raise
        raise GroundingParseError(str(exc)) from exc
    raise GroundingParseError(f"record has neither bbox_2d nor point_2d: {rec!r}")


def serialize_spatial(objects: Sequence[Spatial], fmt: str = "json") -> str:
    """Canonical serialisation: stable key order, no extra whitespace."""
    if fmt == "json":
        return json.dumps([_to_record(o) for o in objects], separators=(",", ":"), ensure_ascii=False)
    if fmt == "xml":
        parts = []
        for o in objects:
            label = html.escape(o.label, quote=True)
            if isinstance(o, BBox):
                parts.append(f'<box label="{label}">{" ".join(str(v) for v in o.coords)}</box>')
            elif isinstance(o, Point):
                parts.append(f'<point label="{label}">{o.x} {o.y}</point>')
            else:
                raise TypeError(f"cannot serialise {type(o).__name__}")
        return "<objects>" + "".join(parts) + "</objects>"
    raise ValueError(f"unknown format {fmt!r}")


def _parse_json(text: str) -> list[Spatial]:
    decoder = json.JSONDecoder()
    last_error = None
    for m in re.finditer(r"[\[{]", text):
        try:
            payload, _ = decoder.raw_decode(text, m.start())
        except json.JSONDecodeError as exc:
            last_error = exc
            continue
        if isinstance(payload, dict):
            payload = [payload]
        if isinstance(payload, list) and all(isinstance(r, dict) for r in payload):
            return [_from_record(r) for r in payload]
    raise GroundingParseError(f"no JSON grounding payload found{f' ({last_error})' if last_error else ''}")


_NUM = r"-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?"
_XML_OBJ = re.compile(r'<(box|point)\s+label="([^"]*)"\s*>([^<]*)</\1>')
_XML_WRAP = re.compile(r"<objects>(.*?)</objects>", re.S)


def _parse_xml(text: str) -> list[Spatial]:
    m = _XML_WRAP.search(text)
    body = m.group(1) if m else text
    found = list(_XML_OBJ.finditer(body))
    if not m and not found:
        raise GroundingParseError("no XML grounding payload found")
    out: list[Spatial] = []
    for obj in found:
        tag, label, inner = obj.group(1), html.unescape(obj.group(2)), obj.group(3).split()
        if not all(re.fullmatch(_NUM, v) for v in inner):
            raise GroundingParseError(f"non-numeric coordinates in <{tag}>: {obj.group(3)!r}")
        vals = [int(v) if re.fullmatch(r"-?\d+", v) else float(v) for v in inner]
        want = 4 if tag == "box" else 2
        if len(vals) != want:
            raise GroundingParseError(f"<{tag}> needs {want} coordinates, got {len(vals)}")
        try:
            out.append(BBox(*vals, label=label) if tag == "box" else Point(*vals, label=label))
        except ValueError as exc:
            raise GroundingParseError(str(exc)) from exc
    return out


def parse_spatial_output(text: str, fmt: str = "json") -> list[Spatial]:
    """Extract boxes and points from model output, ignoring surrounding prose."""
    if fmt == "json":
        return _parse_json(text)
    if fmt == "xml":
        return _parse_xml(text)
    raise ValueError(f"unknown format {fmt!r}")
