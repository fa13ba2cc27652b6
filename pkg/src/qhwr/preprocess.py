"""Signal conditioning for raw ink: duplicate removal, interpolation,
smoothing, equidistant resampling and de-hooking.

Each operation is a pure Stroke -> Stroke transform. Fraction-valued
parameters are relative to the ink height of the whole sample, computed
before any transform, so device resolution is irrelevant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .ink import InkSample, Stroke, ink_height


@dataclass(frozen=True)
class PreprocessConfig:
    smooth_window: int = 5
    smooth_weights: tuple[float, ...] = (1.0, 2.0, 4.0, 2.0, 1.0)
    resample_spacing: float = 0.05
    dehook_max_len_frac: float = 0.07
    dehook_min_angle_deg: float = 90.0
    interpolate_max_gap_frac: float | None = None  # None -> resample_spacing

    def __post_init__(self):
        if self.smooth_window < 3 or self.smooth_window % 2 == 0:
            raise ValueError("smooth_window must be an odd integer >= 3")
        if len(self.smooth_weights) != self.smooth_window:
            raise ValueError("smooth_weights length must equal smooth_window")
        if any(w <= 0 for w in self.smooth_weights):
            raise ValueError("smooth_weights must be positive")
        for name in ("resample_spacing", "dehook_max_len_frac"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must be in (0, 1]")
        if self.interpolate_max_gap_frac is not None and not 0 < self.interpolate_max_gap_frac <= 1:
            raise ValueError("interpolate_max_gap_frac must be in (0, 1]")

    @property
    def max_gap_frac(self) -> float:
        return self.interpolate_max_gap_frac if self.interpolate_max_gap_frac is not None else self.resample_spacing


def _seg_lengths(xy):
    return np.hypot(*(xy[1:] - xy[:-1]).T)


def remove_duplicates(stroke: Stroke) -> Stroke:
    """Drop the later of any two consecutive points sharing (x, y)."""
    if len(stroke) < 2:
        return stroke
    same = np.all(stroke.xy[1:] == stroke.xy[:-1], axis=1)
    if not same.any():
        return stroke
    keep = np.concatenate([[True], ~same])
    return replace(stroke, xy=stroke.xy[keep], t=None if stroke.t is None else stroke.t[keep])


def interpolate(stroke: Stroke, cfg: PreprocessConfig, height: float) -> Stroke:
    """Subdivide long gaps so consecutive spacing <= max_gap_frac * height.

    Inserted points lie on the connecting segment, linear in x, y and t.
    """
    if height <= 0:
        raise ValueError("ink height must be positive")
    if len(stroke) < 2:
        return stroke
    max_gap = cfg.max_gap_frac * height
    # relative slack so equal-spacing outputs (gaps == max_gap up to float
    # noise) are fixed points
    trigger = max_gap * (1 + 1e-9)
    lens = _seg_lengths(stroke.xy)
    if not (lens > trigger).any():
        return stroke
    xs, ts = [], []
    for i in range(len(stroke) - 1):
        xs.append(stroke.xy[i])
        if stroke.t is not None:
            ts.append(stroke.t[i])
        if lens[i] > trigger:
            k = math.ceil(lens[i] / max_gap)
            fr = np.arange(1, k) / k
            seg = stroke.xy[i] + fr[:, None] * (stroke.xy[i + 1] - stroke.xy[i])
            xs.extend(seg)
            if stroke.t is not None:
                ts.extend(stroke.t[i] + fr * (stroke.t[i + 1] - stroke.t[i]))
    xs.append(stroke.xy[-1])
    if stroke.t is not None:
        ts.append(stroke.t[-1])
    return replace(stroke, xy=np.array(xs), t=None if stroke.t is None else np.array(ts))


def smooth(stroke: Stroke, cfg: PreprocessConfig) -> Stroke:
    """Replace each interior point with the weighted average of its window.

    The first and last window//2 points are left untouched; point count is
    preserved. Timestamps are not smoothed (monotonicity must survive).
    """
    half = cfg.smooth_window // 2
    n = len(stroke)
    if n <= 2 * half:
        return stroke
    w = np.asarray(cfg.smooth_weights, dtype=np.float64)
    w = w / w.sum()
    out = stroke.xy.copy()
    acc = np.zeros((n - 2 * half, 2))
    for k in range(cfg.smooth_window):
        acc += w[k] * stroke.xy[k : k + n - 2 * half]
    out[half : n - half] = acc
    return replace(stroke, xy=out)


def resample(stroke: Stroke, cfg: PreprocessConfig, height: float) -> Stroke:
    """Walk the polyline at arc-length steps of resample_spacing * height.

    The first and last original points are always retained; all emitted
    points lie on the original polyline. Only the final segment may be
    shorter than the step.
    """
    if height <= 0:
        raise ValueError("ink height must be positive")
    if len(stroke) < 2:
        return stroke
    step = cfg.resample_spacing * height
    lens = _seg_lengths(stroke.xy)
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    total = cum[-1]
    if total == 0.0:
        xy = np.array([stroke.xy[0], stroke.xy[-1]])
        t = None if stroke.t is None else np.array([stroke.t[0], stroke.t[-1]])
        return replace(stroke, xy=xy, t=t)
    n_steps = int(math.floor(total / step + 1e-9))
    targets = np.arange(n_steps + 1) * step
    # never let rounding place the last regular target beyond (or onto) the end
    if targets[-1] > total - 1e-9 * max(step, total):
        targets = targets[:-1]
    seg = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(lens) - 1)
    denom = np.where(lens[seg] > 0, lens[seg], 1.0)
    fr = (targets - cum[seg]) / denom
    xy = stroke.xy[seg] + fr[:, None] * (stroke.xy[seg + 1] - stroke.xy[seg])
    xy = np.vstack([xy, stroke.xy[-1]])
    xy[0] = stroke.xy[0]
    t = None
    if stroke.t is not None:
        t = stroke.t[seg] + fr * (stroke.t[seg + 1] - stroke.t[seg])
        t = np.concatenate([t, [stroke.t[-1]]])
        t[0] = stroke.t[0]
    return replace(stroke, xy=xy, t=t)


def _turn_angles_deg(xy):
    """Direction change at each interior vertex, in degrees [0, 180]."""
    v = np.diff(xy, axis=0)
    a, b = v[:-1], v[1:]
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = (a * b).sum(axis=1)
    return np.degrees(np.arctan2(np.abs(cross), dot))


def dehook(stroke: Stroke, cfg: PreprocessConfig, height: float) -> Stroke:
    """Trim a short, sharply bent prefix/suffix (pen-down/up hook).

    A prefix (suffix) is removed iff its arc length is at most
    dehook_max_len_frac * height and the direction change at its inner
    boundary is at least dehook_min_angle_deg. At most one removal per end;
    the boundary point itself is kept.
    """
    if height <= 0:
        raise ValueError("ink height must be positive")
    if len(stroke) < 3:
        return stroke
    cap = cfg.dehook_max_len_frac * height

    def lead_cut(xy):
        lens = np.hypot(*(xy[1:] - xy[:-1]).T)
        cum = np.concatenate([[0.0], np.cumsum(lens)])
        turns = _turn_angles_deg(xy)  # turns[k-1] is the turn at vertex k
        cut = 0
        for k in range(1, len(xy) - 1):
            if cum[k] > cap:
                break
            if turns[k - 1] >= cfg.dehook_min_angle_deg:
                cut = k
        return cut

    xy, t = stroke.xy, stroke.t
    k = lead_cut(xy)
    if k:
        xy = xy[k:]
        t = None if t is None else t[k:]
    if len(xy) >= 3:
        k = lead_cut(xy[::-1])
        if k:
            xy = xy[: len(xy) - k]
            t = None if t is None else t[: len(t) - k]
    if xy is stroke.xy:
        return stroke
    return replace(stroke, xy=xy, t=t)


# Named pipelines mirroring the five experiment groups: p0 applies nothing
# and p1 leaves signal conditioning alone (stroke reordering is a separate
# stage); p2..p4 add operations cumulatively.
PIPELINES = {
    "p0": (),
    "p1": (),
    "p2": ("interpolate", "resample"),
    "p3": ("interpolate", "smooth", "resample"),
    "p4": ("dedup", "interpolate", "smooth", "resample", "dehook"),
}


def apply_pipeline(sample: InkSample, pipeline: str | tuple, cfg: PreprocessConfig | None = None) -> InkSample:
    """Apply a named (or explicit) sequence of conditioning operations."""
    cfg = cfg or PreprocessConfig()
    ops = PIPELINES[pipeline] if isinstance(pipeline, str) else tuple(pipeline)
    if not ops:
        return sample
    height = ink_height(sample)
    strokes = list(sample.strokes)
    for op in ops:
        if op == "dedup":
            strokes = [remove_duplicates(s) for s in strokes]
        elif op == "interpolate":
            strokes = [interpolate(s, cfg, height) for s in strokes]
        elif op == "smooth":
            strokes = [smooth(s, cfg) for s in strokes]
        elif op == "resample":
            strokes = [resample(s, cfg, height) for s in strokes]
        elif op == "dehook":
            strokes = [dehook(s, cfg, height) for s in strokes]
        else:
            raise ValueError(f"unknown preprocessing op {op!r}")
    return sample.with_strokes(strokes)
