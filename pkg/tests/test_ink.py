import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhwr.ink import (
    BoundingBox,
    EmptyInput,
    InkSample,
    ParseError,
    Stroke,
    ValidationError,
    bounding_box,
    load_ink,
    save_ink,
)


def make_sample(strokes, **kw):
    return InkSample(strokes=tuple(Stroke.from_points(pts, source_id=i) for i, pts in enumerate(strokes)), **kw)


def test_load_minimal_document():
    doc = b'{"version":1,"strokes":[[[0,0,0],[1,0,10]]]}'
    s = load_ink(doc)
    assert len(s.strokes) == 1
    assert len(s.strokes[0]) == 2
    assert s.strokes[0].t is not None
    assert s.strokes[0].source_id == 0
    assert not s.strokes[0].is_relocated


def test_load_empty_strokes_rejected():
    with pytest.raises(ValidationError):
        load_ink(b'{"version":1,"strokes":[]}')


def test_load_rejects_nan():
    with pytest.raises(ValidationError):
        load_ink(b'{"version":1,"strokes":[[[0,0],[NaN,0]]]}')


def test_load_rejects_unknown_key():
    with pytest.raises(ValidationError) as ei:
        load_ink(b'{"version":1,"strokes":[[[0,0]]],"color":"red"}')
    assert "color" in str(ei.value)


def test_load_requires_version():
    with pytest.raises(ValidationError):
        load_ink(b'{"strokes":[[[0,0]]]}')


def test_parse_error_carries_offset():
    with pytest.raises(ParseError) as ei:
        load_ink(b'{"version":1,"strokes":[[[0,0]]')
    assert ei.value.offset is not None


def test_validation_error_carries_offset():
    doc = b'{"version":1,"strokes":[[[0,0]],[]]}'
    with pytest.raises(ValidationError) as ei:
        load_ink(doc)
    # offset points into the offending (second, empty) stroke
    assert ei.value.offset == doc.index(b"[]")


def test_round_trip_minimal():
    s = make_sample([[(0, 0, 0), (1, 0, 10)]], writer_id="w1", transcript=("a",))
    assert load_ink(save_ink(s)) == s


def test_round_trip_omits_absent_t():
    s = make_sample([[(0.5, -1.25), (2, 3)]])
    raw = save_ink(s)
    doc = json.loads(raw)
    assert all(len(p) == 2 for p in doc["strokes"][0])
    assert load_ink(raw) == s


def test_load_never_drops_strokes():
    strokes = [[(i, 0), (i, 1)] for i in range(17)]
    s = make_sample(strokes)
    assert len(load_ink(save_ink(s)).strokes) == 17


@settings(max_examples=30, deadline=None)
@given(st.data())
def test_round_trip_randomized(data):
    n_strokes = data.draw(st.integers(1, 8))
    coord = st.floats(-1e6, 1e6, allow_nan=False, width=64)
    strokes = []
    for _ in range(n_strokes):
        n = data.draw(st.integers(1, 12))
        with_t = data.draw(st.booleans())
        pts = [(data.draw(coord), data.draw(coord)) for _ in range(n)]
        if with_t:
            ts = sorted(data.draw(st.lists(st.floats(0, 1e7, allow_nan=False), min_size=n, max_size=n)))
            pts = [(x, y, t) for (x, y), t in zip(pts, ts)]
        strokes.append(pts)
    s = make_sample(strokes, writer_id="wr", sampling_rate_hz=125.0)
    assert load_ink(save_ink(s)) == s


def test_round_trip_thousand_strokes():
    rng = np.random.default_rng(7)
    strokes = [[(x, y, i) for i, (x, y) in enumerate(rng.normal(size=(3, 2)))] for _ in range(1000)]
    s = make_sample(strokes)
    assert load_ink(save_ink(s)) == s


def test_bounding_box_basic():
    assert bounding_box([(0, 0), (2, 3)]) == BoundingBox(0, 2, 0, 3)


def test_bounding_box_single_point():
    assert bounding_box([(5, 5)]) == BoundingBox(5, 5, 5, 5)


def test_bounding_box_empty():
    with pytest.raises(EmptyInput):
        bounding_box(np.zeros((0, 2)))


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.tuples(st.floats(-100, 100, allow_nan=False), st.floats(-100, 100, allow_nan=False)),
        min_size=1,
        max_size=100,
    )
)
def test_bounding_box_contains_and_touches(pts):
    arr = np.array(pts)
    box = bounding_box(arr)
    # brute-force oracle
    assert box.x_min == arr[:, 0].min() and box.x_max == arr[:, 0].max()
    assert box.y_min == arr[:, 1].min() and box.y_max == arr[:, 1].max()
    assert all(box.contains(x, y) for x, y in pts)
    assert any(x == box.x_min for x, _ in pts) and any(x == box.x_max for x, _ in pts)
    assert any(y == box.y_min for _, y in pts) and any(y == box.y_max for _, y in pts)


def test_stroke_timestamps_must_be_monotone():
    with pytest.raises(ValueError):
        Stroke.from_points([(0, 0, 5), (1, 1, 4)])


def test_stroke_arrays_frozen():
    s = Stroke.from_points([(0, 0), (1, 1)])
    with pytest.raises(ValueError):
        s.xy[0, 0] = 9.0
