"""Canonical ink data model, geometry helpers, and the ink-JSON interchange format.

Coordinates are device units with +x rightward and +y upward; loaders for
screen-coordinate sources must pre-flip. Timestamps are milliseconds and
optional (absent means unit-spaced sample indices downstream).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

INK_JSON_VERSION = 1

_TOP_KEYS = ("version", "writer", "transcript", "samplingRateHz", "strokes")


class InkError(Exception):
    """Base class for ink loading/validation failures."""


class ParseError(InkError):
    """Malformed ink-JSON document. Carries the byte offset of the failure."""

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


class ValidationError(InkError):
    """Structurally valid JSON that violates an ink invariant."""

    def __init__(self, message, offset=None, path=None):
        loc = ""
        if path is not None:
            loc += f" at {path}"
        if offset is not None:
            loc += f" (byte offset {offset})"
        super().__init__(message + loc)
        self.offset = offset
        self.path = path


class EmptyInput(InkError):
    """Operation received an empty point collection."""


class Point(NamedTuple):
    x: float
    y: float
    t: float | None = None


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError("degenerate bounding box: min exceeds max")

    @property
    def width(self):
        return self.x_max - self.x_min

    @property
    def height(self):
        return self.y_max - self.y_min

    def contains(self, x, y):
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


def _frozen(arr):
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Stroke:
    """One pen-down trace: an (n,2) coordinate array plus optional timestamps.

    ``source_id`` is the stroke's index in the originating document;
    ``is_relocated`` is set by delayed-stroke rearrangement and feeds the
    hat feature.
    """

    xy: np.ndarray
    t: np.ndarray | None = None
    source_id: int = 0
    is_relocated: bool = False

    def __post_init__(self):
        xy = _frozen(self.xy)
        if xy.ndim != 2 or xy.shape[1] != 2:
            raise ValueError("stroke coordinates must be an (n, 2) array")
        if xy.shape[0] < 1:
            raise ValueError("stroke must contain at least one point")
        if not np.isfinite(xy).all():
            raise ValueError("stroke coordinates must be finite")
        object.__setattr__(self, "xy", xy)
        if self.t is not None:
            t = _frozen(self.t)
            if t.shape != (xy.shape[0],):
                raise ValueError("timestamp array must match point count")
            if not np.isfinite(t).all():
                raise ValueError("timestamps must be finite")
            if np.any(np.diff(t) < 0):
                raise ValueError("timestamps must be non-decreasing within a stroke")
            object.__setattr__(self, "t", t)
        if self.source_id < 0:
            raise ValueError("source_id must be >= 0")

    @classmethod
    def from_points(cls, points, source_id=0, is_relocated=False):
        """Build a stroke from (x, y) or (x, y, t) tuples; t all-or-none."""
        pts = list(points)
        if not pts:
            raise ValueError("stroke must contain at least one point")
        has_t = len(pts[0]) > 2 and pts[0][2] is not None
        xy = np.array([[p[0], p[1]] for p in pts], dtype=np.float64)
        t = np.array([p[2] for p in pts], dtype=np.float64) if has_t else None
        return cls(xy=xy, t=t, source_id=source_id, is_relocated=is_relocated)

    def __len__(self):
        return self.xy.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Stroke):
            return NotImplemented
        if self.source_id != other.source_id or self.is_relocated != other.is_relocated:
            return False
        if not np.array_equal(self.xy, other.xy):
            return False
        if (self.t is None) != (other.t is None):
            return False
        return self.t is None or np.array_equal(self.t, other.t)

    def point(self, i) -> Point:
        return Point(self.xy[i, 0], self.xy[i, 1], None if self.t is None else self.t[i])


@dataclass(frozen=True, eq=False)
class InkSample:
    """Ordered strokes plus transcript/writer metadata; the raw observation.

    Stroke source ids are unique on freshly loaded ink; delayed-stroke
    rearrangement may split a host stroke into runs that share an id
    (provenance is preserved on purpose).
    """

    strokes: tuple[Stroke, ...]
    writer_id: str = ""
    transcript: tuple[str, ...] | None = None
    sampling_rate_hz: float | None = None

    def __post_init__(self):
        strokes = tuple(self.strokes)
        if not strokes:
            raise ValueError("sample must contain at least one stroke")
        object.__setattr__(self, "strokes", strokes)

    def __eq__(self, other):
        if not isinstance(other, InkSample):
            return NotImplemented
        return (
            self.strokes == other.strokes
            and self.writer_id == other.writer_id
            and self.transcript == other.transcript
            and self.sampling_rate_hz == other.sampling_rate_hz
        )

    @property
    def n_points(self):
        return sum(len(s) for s in self.strokes)

    def all_xy(self) -> np.ndarray:
        return np.concatenate([s.xy for s in self.strokes], axis=0)

    def with_strokes(self, strokes) -> "InkSample":
        return replace(self, strokes=tuple(strokes))


def bounding_box(xy) -> BoundingBox:
    """Tight axis-aligned box over an (n,2) array or a point iterable."""
    arr = np.asarray(xy, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("bounding_box of empty point list")
    arr = arr.reshape(-1, arr.shape[-1])[:, :2]
    return BoundingBox(
        x_min=float(arr[:, 0].min()),
        x_max=float(arr[:, 0].max()),
        y_min=float(arr[:, 1].min()),
        y_max=float(arr[:, 1].max()),
    )


def sample_bounding_box(sample: InkSample) -> BoundingBox:
    return bounding_box(sample.all_xy())


def ink_height(sample: InkSample) -> float:
    """Reference height used by all fraction-valued parameters.

    Falls back to the width, then to 1.0, for degenerate (flat or
    single-point) samples.
    """
    box = sample_bounding_box(sample)
    if box.height > 0:
        return box.height
    if box.width > 0:
        return box.width
    return 1.0


# --- ink-JSON ---------------------------------------------------------------


def _fmt(v: float) -> str:
    if v == math.floor(v) and abs(v) < 1e16:
        return str(int(v))
    return format(v, ".17g")


def save_ink(sample: InkSample) -> bytes:
    """Serialize to ink-JSON. Floats carry 17 significant digits so that
    load_ink(save_ink(s)) == s field-for-field."""
    parts = ['{"version":%d' % INK_JSON_VERSION]
    parts.append(',"writer":%s' % json.dumps(sample.writer_id))
    if sample.transcript is None:
        parts.append(',"transcript":null')
    else:
        parts.append(',"transcript":%s' % json.dumps(list(sample.transcript)))
    if sample.sampling_rate_hz is None:
        parts.append(',"samplingRateHz":null')
    else:
        parts.append(',"samplingRateHz":%s' % _fmt(sample.sampling_rate_hz))
    stroke_texts = []
    for s in sample.strokes:
        pts = []
        for i in range(len(s)):
            if s.t is None:
                pts.append("[%s,%s]" % (_fmt(s.xy[i, 0]), _fmt(s.xy[i, 1])))
            else:
                pts.append("[%s,%s,%s]" % (_fmt(s.xy[i, 0]), _fmt(s.xy[i, 1]), _fmt(s.t[i])))
        stroke_texts.append("[" + ",".join(pts) + "]")
    parts.append(',"strokes":[' + ",".join(stroke_texts) + "]}")
    return "".join(parts).encode("utf-8")


def _offset_of(text: str, path: tuple) -> int | None:
    """Byte offset of the value at ``path`` (object keys / array indices)
    inside already-syntactically-valid JSON text. Best effort."""
    dec = json.JSONDecoder()

    def skip_ws(i):
        while i < len(text) and text[i] in " \t\n\r":
            i += 1
        return i

    def locate(i, remaining):
        i = skip_ws(i)
        if not remaining:
            return i
        head, rest = remaining[0], remaining[1:]
        if text[i] == "{":
            i += 1
            while True:
                i = skip_ws(i)
                if text[i] == "}":
                    return None
                key, i = dec.raw_decode(text, i)
                i = skip_ws(i)
                i += 1  # colon
                i = skip_ws(i)
                if key == head:
                    return locate(i, rest)
                _, i = dec.raw_decode(text, i)
                i = skip_ws(i)
                if text[i] == ",":
                    i += 1
        elif text[i] == "[":
            i += 1
            idx = 0
            while True:
                i = skip_ws(i)
                if text[i] == "]":
                    return None
                if idx == head:
                    return locate(i, rest)
                _, i = dec.raw_decode(text, i)
                i = skip_ws(i)
                if text[i] == ",":
                    i += 1
                idx += 1
        return None

    try:
        return locate(0, path)
    except (IndexError, ValueError):
        return None


def load_ink(data: bytes) -> InkSample:
    """Parse and validate an ink-JSON document.

    Raises ParseError for malformed JSON and ValidationError for documents
    that violate an invariant; both carry a byte offset.
    """
    if isinstance(data, bytes):
        text = data.decode("utf-8")
    else:
        text = data

    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, offset=e.pos) from e

    def fail(msg, path):
        raise ValidationError(msg, offset=_offset_of(text, path), path=_path_str(path))

    if not isinstance(doc, dict):
        fail("top-level value must be an object", ())
    for key in doc:
        if key not in _TOP_KEYS:
            fail(f"unknown top-level key {key!r}", (key,))
    if "version" not in doc:
        fail("missing mandatory 'version' field", ())
    if doc["version"] != INK_JSON_VERSION:
        fail(f"unsupported version {doc['version']!r}", ("version",))
    writer = doc.get("writer", "")
    if not isinstance(writer, str):
        fail("'writer' must be a string", ("writer",))
    transcript = doc.get("transcript")
    if transcript is not None:
        if not isinstance(transcript, list) or not all(isinstance(s, str) for s in transcript):
            fail("'transcript' must be null or a list of strings", ("transcript",))
        transcript = tuple(transcript)
    rate = doc.get("samplingRateHz")
    if rate is not None and not isinstance(rate, (int, float)):
        fail("'samplingRateHz' must be null or a number", ("samplingRateHz",))
    raw_strokes = doc.get("strokes")
    if not isinstance(raw_strokes, list):
        fail("'strokes' must be an array", ("strokes",))
    if len(raw_strokes) == 0:
        fail("'strokes' must be nonempty", ("strokes",))

    strokes = []
    for si, raw in enumerate(raw_strokes):
        if not isinstance(raw, list) or len(raw) == 0:
            fail("stroke must be a nonempty array of points", ("strokes", si))
        n = len(raw)
        lens = {len(p) if isinstance(p, list) else 0 for p in raw}
        if not lens <= {2, 3} or 0 in lens:
            fail("points must be 2- or 3-element numeric arrays", ("strokes", si))
        if lens == {2, 3}:
            fail("mixed timestamped/untimestamped points in one stroke", ("strokes", si))
        has_t = lens == {3}
        xy = np.empty((n, 2), dtype=np.float64)
        t = np.empty(n, dtype=np.float64) if has_t else None
        for pi, p in enumerate(raw):
            for v in p:
                if not isinstance(v, (int, float)) or isinstance(v, bool):
                    fail("point coordinates must be numbers", ("strokes", si, pi))
            xy[pi, 0], xy[pi, 1] = p[0], p[1]
            if has_t:
                t[pi] = p[2]
        if not np.isfinite(xy).all() or (t is not None and not np.isfinite(t).all()):
            fail("coordinates must be finite (no NaN/Inf)", ("strokes", si))
        if t is not None and np.any(np.diff(t) < 0):
            fail("timestamps must be non-decreasing within a stroke", ("strokes", si))
        strokes.append(Stroke(xy=xy, t=t, source_id=si, is_relocated=False))

    sample = InkSample(
        strokes=tuple(strokes),
        writer_id=writer,
        transcript=transcript,
        sampling_rate_hz=None if rate is None else float(rate),
    )
    return sample


def _path_str(path: tuple) -> str:
    out = "$"
    for p in path:
        out += f"[{p!r}]" if isinstance(p, int) else f".{p}"
    return out
