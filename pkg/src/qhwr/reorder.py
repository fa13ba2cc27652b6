"""Delayed-stroke rearrangement.

Strokes are cut into fixed-size segments; while walking the segments of an
earlier stroke, any not-yet-emitted later stroke whose rightmost point lies
strictly right of the current segment's rightmost point is emitted first
(right-to-left scripts write rightmost ink earliest). Untouched adjacent
runs of the same source stroke are merged back afterwards, so ink with no
delayed strokes passes through bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .ink import EmptyInput, InkSample, Point, Stroke


@dataclass(frozen=True)
class ReorderConfig:
    segment_size: int = 10
    strict_inequality: bool = True

    def __post_init__(self):
        if self.segment_size < 2:
            raise ValueError("segment_size must be >= 2")


@dataclass(frozen=True)
class Insertion:
    moved_source_id: int
    host_source_id: int
    host_segment_index: int


@dataclass(frozen=True)
class ReorderReport:
    """Observability record: one output_order entry per emitted run (a split
    host stroke contributes several runs with the same source id)."""

    insertions: tuple[Insertion, ...]
    output_order: tuple[int, ...]


def segment_stroke(stroke: Stroke, size: int) -> list[Stroke]:
    """Cut into consecutive segments of ``size`` points (last may be short).

    Segment concatenation equals the input point sequence; all segments
    inherit the source id.
    """
    if size < 2:
        raise ValueError("segment size must be >= 2")
    n = len(stroke)
    if n <= size:
        return [stroke]
    out = []
    for start in range(0, n, size):
        end = min(start + size, n)
        out.append(
            replace(
                stroke,
                xy=stroke.xy[start:end],
                t=None if stroke.t is None else stroke.t[start:end],
            )
        )
    return out


def farthest_point(points) -> Point:
    """Rightmost point (maximum x); ties broken by earliest index."""
    if isinstance(points, Stroke):
        xy, t = points.xy, points.t
    else:
        xy = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        t = None
    if xy.size == 0:
        raise EmptyInput("farthest_point of empty point list")
    i = int(np.argmax(xy[:, 0]))
    return Point(xy[i, 0], xy[i, 1], None if t is None else t[i])


def _merge_runs(runs: list[Stroke]) -> list[Stroke]:
    """Concatenate consecutive runs that came from the same source stroke
    and share the relocation flag."""
    merged: list[Stroke] = []
    for run in runs:
        if (
            merged
            and merged[-1].source_id == run.source_id
            and merged[-1].is_relocated == run.is_relocated
        ):
            prev = merged[-1]
            merged[-1] = replace(
                prev,
                xy=np.concatenate([prev.xy, run.xy]),
                t=None if prev.t is None else np.concatenate([prev.t, run.t]),
            )
        else:
            merged.append(run)
    return merged


def rearrange(sample: InkSample, cfg: ReorderConfig | None = None) -> tuple[InkSample, ReorderReport]:
    """Re-sequence delayed strokes to their geometric position.

    The single segment-walk pass repeats until it stops moving anything
    (marks written before their body need a second pass to land inside it),
    so the result is a fixed point. Returns the rearranged sample
    (bit-identical input object when nothing moved) plus a report of all
    insertions and the final run order. Relocated strokes get
    is_relocated=True (sticky across passes); they are emitted whole, never
    segmented.
    """
    cfg = cfg or ReorderConfig()
    out = sample
    all_insertions: list[Insertion] = []
    report = ReorderReport(insertions=(), output_order=tuple(s.source_id for s in sample.strokes))
    for _ in range(8):
        out, rep = _rearrange_once(out, cfg)
        if not rep.insertions:
            break
        all_insertions.extend(rep.insertions)
        report = rep
    if not all_insertions:
        return sample, report
    return out, ReorderReport(insertions=tuple(all_insertions), output_order=report.output_order)


def _rearrange_once(sample: InkSample, cfg: ReorderConfig) -> tuple[InkSample, ReorderReport]:
    strokes = sample.strokes
    n = len(strokes)
    used = [False] * n
    runs: list[Stroke] = []
    insertions: list[Insertion] = []

    farthest_x = [float(s.xy[:, 0].max()) for s in strokes]

    for i in range(n):
        if used[i]:
            continue
        segments = segment_stroke(strokes[i], cfg.segment_size)
        for si, seg in enumerate(segments):
            fx_seg = float(seg.xy[:, 0].max())
            pending = []
            for j in range(i + 1, n):
                if used[j]:
                    continue
                beats = farthest_x[j] > fx_seg if cfg.strict_inequality else farthest_x[j] >= fx_seg
                if beats:
                    pending.append(j)
            # several qualifying strokes at one boundary: rightmost first,
            # original order on ties
            pending.sort(key=lambda j: (-farthest_x[j], j))
            for j in pending:
                runs.append(replace(strokes[j], is_relocated=True))
                used[j] = True
                insertions.append(
                    Insertion(
                        moved_source_id=strokes[j].source_id,
                        host_source_id=strokes[i].source_id,
                        host_segment_index=si,
                    )
                )
            runs.append(seg)
        used[i] = True

    if not insertions:
        report = ReorderReport(
            insertions=(),
            output_order=tuple(s.source_id for s in strokes),
        )
        return sample, report

    merged = _merge_runs(runs)
    report = ReorderReport(
        insertions=tuple(insertions),
        output_order=tuple(s.source_id for s in merged),
    )
    return sample.with_strokes(merged), report


def report_to_dict(report: ReorderReport) -> dict:
    return {
        "insertions": [
            {
                "movedSourceId": ins.moved_source_id,
                "hostSourceId": ins.host_source_id,
                "hostSegmentIndex": ins.host_segment_index,
            }
            for ins in report.insertions
        ],
        "outputOrder": list(report.output_order),
    }
