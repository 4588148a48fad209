"""Parser, canonical serializer and validator for the QwenVL HTML document format.

The format is a closed grammar, so this is a dedicated recogniser rather than
a general HTML parser. Canonical form, one element per line::

    <html><body>
    <p data-bbox="x1 y1 x2 y2"> content </p>
    <style>table style</style><table data-bbox="x1 y1 x2 y2" class="table{id}"> table content </table>
    <div class="chart" data-bbox="x1 y1 x2 y2"> <img data-bbox="x1 y1 x2 y2" /><table> chart content </table></div>
    <div class="formula" data-bbox="x1 y1 x2 y2"> <img data-bbox="x1 y1 x2 y2" /> <div> formula content </div></div>
    <div class="image caption" data-bbox="x1 y1 x2 y2"> <img data-bbox="x1 y1 x2 y2" /><p> image caption </p></div>
    <div class="image ocr" data-bbox="x1 y1 x2 y2"> <img data-bbox="x1 y1 x2 y2" /><p> image ocr </p></div>
    <div class="music sheet" format="abc notation" data-bbox="x1 y1 x2 y2"> <img data-bbox="x1 y1 x2 y2" /> <div> music sheet content </div></div>
    <div class="chemical formula" format="smile" data-bbox="x1 y1 x2 y2"> <img data-bbox="x1 y1 x2 y2" /> <div> chemical formula content </div></div>
    </html></body>

The closing ``</html></body>`` order is kept as the format defines it;
``</body></html>`` is also accepted on input. Whitespace between tags is
insignificant. Element content is kept verbatim, except that the single
space the canonical form puts after the opening tag and before the closing
tag is not part of the content.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .grounding import BBox

KINDS = (
    "paragraph",
    "table",
    "chart",
    "formula",
    "image_caption",
    "image_ocr",
    "music_sheet",
    "chemical_formula",
)

# div class -> (kind, content tag, required format attribute)
_DIV_KINDS = {
    "chart": ("chart", "table", None),
    "formula": ("formula", "div", None),
    "image caption": ("image_caption", "p", None),
    "image ocr": ("image_ocr", "p", None),
    "music sheet": ("music_sheet", "div", "abc notation"),
    "chemical formula": ("chemical_formula", "div", "smile"),
}
_KIND_TO_DIV = {kind: (cls, tag, fmt) for cls, (kind, tag, fmt) in _DIV_KINDS.items()}
# space between the <img /> and the content node in canonical output
_IMG_GAP = {"table": "", "p": "", "div": " "}

HTML_OPEN = "<html><body>"
HTML_CLOSE = "</html></body>"


class DocFormatError(ValueError):
    def __init__(self, message: str, pos: int | None = None):
        super().__init__(message if pos is None else f"{message} (at offset {pos})")
        self.pos = pos


@dataclass(frozen=True)
class DocElement:
    kind: str
    bbox: BBox
    content: str = ""
    inner_img_bbox: BBox | None = None
    format_attr: str | None = None
    table_id: int | None = None
    table_style: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown element kind {self.kind!r}")
        div = _KIND_TO_DIV.get(self.kind)
        if div is not None:
            _, tag, fmt = div
            if self.format_attr != fmt:
                raise ValueError(f"{self.kind} requires format={fmt!r}, got {self.format_attr!r}")
            if self.inner_img_bbox is None:
                raise ValueError(f"{self.kind} requires an inner <img> bbox")
        else:
            tag = "p" if self.kind == "paragraph" else "table"
            if self.format_attr is not None or self.inner_img_bbox is not None:
                raise ValueError(f"{self.kind} takes no format attribute or inner image")
        if self.kind == "table":
            if self.table_id is None or self.table_id < 0:
                raise ValueError("table requires a non-negative table_id")
            if self.table_style is not None and "</style>" in self.table_style:
                raise ValueError("table style may not contain </style>")
        elif self.table_id is not None or self.table_style is not None:
            raise ValueError(f"{self.kind} takes no table id or style")
        if f"</{tag}>" in self.content:
            raise ValueError(f"{self.kind} content may not contain </{tag}>")


@dataclass(frozen=True)
class DocTree:
    elements: tuple[DocElement, ...] = ()
    page_size: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if self.page_size is not None:
            object.__setattr__(self, "page_size", tuple(int(v) for v in self.page_size))


# -- parsing ----------------------------------------------------------------

_ATTR = re.compile(r'\s+([A-Za-z][A-Za-z0-9-]*)="([^"<>]*)"')
_TAG_NAME = re.compile(r"<([A-Za-z][A-Za-z0-9]*)")
_WS = re.compile(r"\s*")


def parse_bbox(text: str, pos: int | None = None) -> BBox:
    parts = text.split()
    if len(parts) != 4 or not all(re.fullmatch(r"\d+", p) for p in parts):
        raise DocFormatError(f"malformed data-bbox {text!r}: need four non-negative integers", pos)
    x1, y1, x2, y2 = (int(p) for p in parts)
    if x2 <= x1 or y2 <= y1:
        raise DocFormatError(f"malformed data-bbox {text!r}: need x1 < x2 and y1 < y2", pos)
    return BBox(x1, y1, x2, y2)


def _strip_pad(text: str) -> str:
    if text.startswith(" "):
        text = text[1:]
    if text.endswith(" "):
        text = text[:-1]
    return text


class _Parser:
    def __init__(self, text: str):
        self.s = text
        self.i = 0

    def error(self, msg: str):
        raise DocFormatError(msg, self.i)

    def ws(self):
        self.i = _WS.match(self.s, self.i).end()

    def at(self, lit: str) -> bool:
        return self.s.startswith(lit, self.i)

    def expect(self, lit: str):
        if not self.at(lit):
            found = self.s[self.i:self.i + 20]
            self.error(f"expected {lit!r}, found {found!r}" if found else f"expected {lit!r} before end of input (unclosed tag)")
        self.i += len(lit)

    def peek_tag(self) -> str | None:
        m = _TAG_NAME.match(self.s, self.i)
        return m.group(1) if m else None

    def open_tag(self, name: str, allowed: set[str], self_closing: bool = False) -> dict[str, str]:
        start = self.i
        self.expect("<" + name)
        attrs: dict[str, str] = {}
        while True:
            m = _ATTR.match(self.s, self.i)
            if not m:
                break
            key, value = m.group(1), m.group(2)
            if key not in allowed:
                raise DocFormatError(f"unexpected attribute {key!r} on <{name}>", start)
            if key in attrs:
                raise DocFormatError(f"duplicate attribute {key!r} on <{name}>", start)
            attrs[key] = value
            self.i = m.end()
        self.ws()
        if self_closing:
            if self.at("/>"):
                self.i += 2
            elif self.at(">"):
                self.i += 1
            else:
                self.error(f"malformed <{name}> tag")
        else:
            self.expect(">")
        return attrs

    def raw_until(self, closing: str, what: str) -> str:
        end = self.s.find(closing, self.i)
        if end < 0:
            self.error(f"unclosed {what}: missing {closing}")
        text = self.s[self.i:end]
        self.i = end + len(closing)
        return text

    def bbox_attr(self, attrs: dict[str, str], tag: str, pos: int) -> BBox:
        if "data-bbox" not in attrs:
            raise DocFormatError(f"<{tag}> is missing data-bbox", pos)
        return parse_bbox(attrs["data-bbox"], pos)

    def document(self) -> DocTree:
        self.ws()
        self.expect("<html>")
        self.ws()
        self.expect("<body>")
        elements = []
        while True:
            self.ws()
            if self.at("</html>") or self.at("</body>"):
                break
            if self.i >= len(self.s):
                self.error("unclosed <body>: missing </html></body>")
            elements.append(self.element())
        if self.at("</html>"):
            self.expect("</html>")
            self.ws()
            self.expect("</body>")
        else:
            self.expect("</body>")
            self.ws()
            self.expect("</html>")
        self.ws()
        if self.i != len(self.s):
            self.error("trailing content after document end")
        return DocTree(tuple(elements))

    def element(self) -> DocElement:
        tag = self.peek_tag()
        if tag == "p":
            return self.paragraph()
        if tag in ("style", "table"):
            return self.table()
        if tag == "div":
            return self.div()
        self.error(f"unknown tag <{tag}>" if tag else f"unexpected text {self.s[self.i:self.i + 20]!r}")

    def paragraph(self) -> DocElement:
        pos = self.i
        attrs = self.open_tag("p", {"data-bbox"})
        bbox = self.bbox_attr(attrs, "p", pos)
        content = self.raw_until("</p>", "<p>")
        return DocElement("paragraph", bbox, _strip_pad(content))

    def table(self) -> DocElement:
        style = None
        if self.at("<style"):
            self.open_tag("style", set())
            style = self.raw_until("</style>", "<style>")
            self.ws()
        pos = self.i
        if self.peek_tag() != "table":
            self.error("<style> must be followed by its <table>")
        attrs = self.open_tag("table", {"data-bbox", "class"})
        bbox = self.bbox_attr(attrs, "table", pos)
        cls = attrs.get("class")
        if cls is None:
            raise DocFormatError("<table> is missing class=\"table{id}\"", pos)
        m = re.fullmatch(r"table(\d+)", cls)
        if not m:
            raise DocFormatError(f"unknown table class {cls!r}", pos)
        content = self.raw_until("</table>", "<table>")
        return DocElement("table", bbox, _strip_pad(content), table_id=int(m.group(1)), table_style=style)

    def div(self) -> DocElement:
        pos = self.i
        attrs = self.open_tag("div", {"class", "format", "data-bbox"})
        cls = attrs.get("class")
        if cls not in _DIV_KINDS:
            raise DocFormatError(f"unknown element class {cls!r}", pos)
        kind, content_tag, fmt = _DIV_KINDS[cls]
        got_fmt = attrs.get("format")
        if fmt is not None and got_fmt is None:
            raise DocFormatError(f'{cls} is missing format="{fmt}"', pos)
        if got_fmt != fmt:
            raise DocFormatError(f"{cls} has format={got_fmt!r}, expected {fmt!r}", pos)
        bbox = self.bbox_attr(attrs, "div", pos)
        self.ws()
        img_pos = self.i
        if self.peek_tag() != "img":
            self.error(f"{cls} must start with an <img data-bbox> element")
        img_attrs = self.open_tag("img", {"data-bbox"}, self_closing=True)
        img = self.bbox_attr(img_attrs, "img", img_pos)
        self.ws()
        if self.peek_tag() != content_tag or not self.at(f"<{content_tag}>"):
            self.error(f"{cls} content must be a bare <{content_tag}> element")
        self.expect(f"<{content_tag}>")
        content = self.raw_until(f"</{content_tag}>", f"<{content_tag}>")
        self.ws()
        if not self.at("</div>"):
            raise DocFormatError(f'unclosed <div class="{cls}">: missing </div>', pos)
        self.i += len("</div>")
        return DocElement(kind, bbox, _strip_pad(content), inner_img_bbox=img, format_attr=fmt)


def parse_qwenvl_html(text: str) -> DocTree:
    """Parse a QwenVL HTML document into a :class:`DocTree`.

    Raises :class:`DocFormatError` on malformed bboxes, unknown tags or
    classes, missing format attributes and unclosed tags.
    """
    try:
        return _Parser(text).document()
    except DocFormatError:
        raise
    except ValueError as exc:
        raise DocFormatError(str(exc)) from exc


# -- serialisation ----------------------------------------------------------

def _bbox_str(b: BBox) -> str:
    return " ".join(str(int(v)) for v in b.coords)


def _check_int_box(b: BBox, what: str):
    if not all(float(v).is_integer() for v in b.coords):
        raise ValueError(f"{what} {b.coords} must have integer coordinates")


def serialize_element(e: DocElement) -> str:
    _check_int_box(e.bbox, "bbox")
    box = _bbox_str(e.bbox)
    if e.kind == "paragraph":
        return f'<p data-bbox="{box}"> {e.content} </p>'
    if e.kind == "table":
        style = f"<style>{e.table_style}</style>" if e.table_style is not None else ""
        return f'{style}<table data-bbox="{box}" class="table{e.table_id}"> {e.content} </table>'
    cls, tag, fmt = _KIND_TO_DIV[e.kind]
    _check_int_box(e.inner_img_bbox, "inner image bbox")
    fmt_attr = f' format="{fmt}"' if fmt else ""
    return (
        f'<div class="{cls}"{fmt_attr} data-bbox="{box}"> <img data-bbox="{_bbox_str(e.inner_img_bbox)}" />'
        f"{_IMG_GAP[tag]}<{tag}> {e.content} </{tag}></div>"
    )


def serialize_qwenvl_html(tree: DocTree) -> str:
    """Canonical text for ``tree``; ``parse_qwenvl_html`` inverts it exactly."""
    if not tree.elements:
        return HTML_OPEN + HTML_CLOSE
    lines = [serialize_element(e) for e in tree.elements]
    return HTML_OPEN + "\n" + "\n".join(lines) + "\n" + HTML_CLOSE


# -- validation -------------------------------------------------------------

@dataclass(frozen=True)
class Issue:
    code: str  # out_of_bounds | not_contained | reading_order
    severity: str  # error | warning
    index: int
    message: str

    def to_dict(self) -> dict:
        return {"code": self.code, "severity": self.severity, "index": self.index, "message": self.message}


def validate(tree: DocTree, page: tuple[int, int] | None = None) -> list[Issue]:
    """Check boxes against the page ``(width, height)`` and each other.

    Reports boxes leaving the page, inner images not contained in their
    element, and (as warnings) elements that start more than their own
    height above a horizontally overlapping predecessor, which usually
    means the reading order is off.
    """
    page = page if page is not None else tree.page_size
    issues: list[Issue] = []
    prev = None
    for i, e in enumerate(tree.elements):
        boxes = [("bbox", e.bbox)] + ([("inner img bbox", e.inner_img_bbox)] if e.inner_img_bbox else [])
        if page is not None:
            for what, b in boxes:
                if not b.within(*page):
                    issues.append(Issue("out_of_bounds", "error", i, f"{e.kind} {what} {list(b.coords)} exceeds page {list(page)}"))
        if e.inner_img_bbox is not None and not e.bbox.contains(e.inner_img_bbox):
            issues.append(Issue(
                "not_contained", "error", i,
                f"{e.kind} inner img bbox {list(e.inner_img_bbox.coords)} not inside {list(e.bbox.coords)}",
            ))
        if prev is not None:
            height = e.bbox.y2 - e.bbox.y1
            overlap = min(prev.x2, e.bbox.x2) - max(prev.x1, e.bbox.x1) > 0
            if overlap and prev.y1 - e.bbox.y1 > height:
                issues.append(Issue("reading_order", "warning", i, f"{e.kind} starts above its predecessor"))
        prev = e.bbox
    return issues


# -- neutral JSON layout ----------------------------------------------------

_ELEMENT_KEYS = ("kind", "bbox", "inner_img_bbox", "content", "format", "table_id", "table_style")


def to_layout_json(tree: DocTree) -> dict:
    """Lossless JSON-ready dict; every element carries all keys (``None`` when unused)."""
    return {
        "page_size": list(tree.page_size) if tree.page_size is not None else None,
        "elements": [
            {
                "kind": e.kind,
                "bbox": list(e.bbox.coords),
                "inner_img_bbox": list(e.inner_img_bbox.coords) if e.inner_img_bbox else None,
                "content": e.content,
                "format": e.format_attr,
                "table_id": e.table_id,
                "table_style": e.table_style,
            }
            for e in tree.elements
        ],
    }


def _layout_box(v, what: str) -> BBox:
    if not (isinstance(v, list) and len(v) == 4 and all(isinstance(c, int) and not isinstance(c, bool) for c in v)):
        raise DocFormatError(f"{what} must be a list of four integers, got {v!r}")
    try:
        return BBox(*v)
    except ValueError as exc:
        raise DocFormatError(f"{what}: {exc}") from exc


def from_layout_json(data: dict) -> DocTree:
    if not isinstance(data, dict) or set(data) != {"page_size", "elements"}:
        raise DocFormatError("layout must be an object with exactly 'page_size' and 'elements'")
    page = data["page_size"]
    if page is not None and not (isinstance(page, list) and len(page) == 2 and all(isinstance(v, int) and v > 0 for v in page)):
        raise DocFormatError(f"page_size must be null or [width, height], got {page!r}")
    if not isinstance(data["elements"], list):
        raise DocFormatError("elements must be a list")
    elements = []
    for n, rec in enumerate(data["elements"]):
        if not isinstance(rec, dict) or set(rec) != set(_ELEMENT_KEYS):
            raise DocFormatError(f"element {n} must have exactly the keys {list(_ELEMENT_KEYS)}")
        if not isinstance(rec["content"], str):
            raise DocFormatError(f"element {n} content must be a string")
        try:
            elements.append(DocElement(
                kind=rec["kind"],
                bbox=_layout_box(rec["bbox"], f"element {n} bbox"),
                content=rec["content"],
                inner_img_bbox=_layout_box(rec["inner_img_bbox"], f"element {n} inner_img_bbox") if rec["inner_img_bbox"] is not None else None,
                format_attr=rec["format"],
                table_id=rec["table_id"],
                table_style=rec["table_style"],
            ))
        except DocFormatError:
            raise
        except (TypeError, ValueError) as exc:
            raise DocFormatError(f"element {n}: {exc}") from exc
    return DocTree(tuple(elements), tuple(page) if page is not None else None)
