"""Point-wise feature extraction: direction, curvature, curliness, aspect,
chain code, baseline/zones, loops, the hat flag and four dynamic features.

Vector layout (D = 19):
    0,1   cos/sin of local writing direction (backward difference,
          earlier-minus-current sign convention)
    2,3   cos/sin of the angular-difference (curvature) signal
    4     curliness: vicinity trajectory length over max bbox side, minus 2
    5     aspect: 2*dy/(dx+dy) - 1 of the vicinity bbox
    6,7   cos/sin of the 32-direction chain-code bin center
    8     normalized vertical offset from the baseline
    9-11  zone one-hot (upper, middle, lower)
    12    loop membership flag
    13    hat flag (point belongs to a relocated stroke)
    14    reserved, always 0
    15-18 path-tangent angle, velocity magnitude, log curvature radius,
          total acceleration magnitude

Ink is geometrically normalized first: uniform scale so the ink height is 1
and the baseline sits at y = 0. Windows never cross stroke boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ink import EmptyInput, InkSample, Stroke, sample_bounding_box

DIM = 19
_BASE_DIM = 15


@dataclass(frozen=True)
class FeatureConfig:
    vicinity: int = 2
    chain_directions: int = 32
    baseline_bins: int = 50
    zone_band_frac: float = 0.15
    epsilon_log: float = 1e-6

    def __post_init__(self):
        if self.vicinity < 1:
            raise ValueError("vicinity must be >= 1")
        if self.chain_directions != 32:
            raise ValueError("chain code is fixed at 32 directions")
        if self.baseline_bins < 10:
            raise ValueError("baseline_bins must be >= 10")


@dataclass(frozen=True)
class FeatureSequence:
    """One frame per ink point, in rearranged stroke order."""

    frames: np.ndarray  # (T, D)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.frames, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("frames must be a (T, D) matrix")
        object.__setattr__(self, "frames", arr)

    @property
    def dim(self):
        return self.frames.shape[1]

    def __len__(self):
        return self.frames.shape[0]


def writing_direction(pts, i):
    """(cos a, sin a) with dx = x(i-1) - x(i); (0, 0) when degenerate."""
    pts = np.asarray(pts, dtype=np.float64)
    d = pts[i - 1] - pts[i]
    ds = float(np.hypot(d[0], d[1]))
    if ds == 0.0:
        return (0.0, 0.0)
    return (d[0] / ds, d[1] / ds)


def curvature(pts, i):
    """Angular difference between directions at i-1 and i+1; (1, 0) when the
    i +/- 2 window does not exist."""
    pts = np.asarray(pts, dtype=np.float64)
    if i - 2 < 0 or i + 2 >= len(pts):
        return (1.0, 0.0)
    ca1, sa1 = writing_direction(pts, i - 1)
    ca2, sa2 = writing_direction(pts, i + 1)
    return (ca1 * ca2 + sa1 * sa2, ca1 * sa2 - sa1 * ca2)


def _vicinity(pts, i, v):
    lo = max(0, i - v)
    hi = min(len(pts) - 1, i + v)
    return pts[lo : hi + 1]


def curliness(pts, i, cfg: FeatureConfig):
    """Trajectory length over max bounding-box side, minus 2; -1 when the
    vicinity is degenerate. Lower bound -1 holds exactly."""
    pts = np.asarray(pts, dtype=np.float64)
    win = _vicinity(pts, i, cfg.vicinity)
    if len(win) < 2:
        return -1.0
    side = max(np.ptp(win[:, 0]), np.ptp(win[:, 1]))
    if side < cfg.epsilon_log:
        return -1.0
    length = float(np.hypot(*(win[1:] - win[:-1]).T).sum())
    return max(length / side - 2.0, -1.0)


def aspect(pts, i, cfg: FeatureConfig):
    """Height-to-width balance of the vicinity box, in [-1, 1]."""
    pts = np.asarray(pts, dtype=np.float64)
    win = _vicinity(pts, i, cfg.vicinity)
    dx = float(np.ptp(win[:, 0]))
    dy = float(np.ptp(win[:, 1]))
    if dx + dy == 0.0:
        return 0.0
    return min(max(2.0 * dy / (dx + dy) - 1.0, -1.0), 1.0)


def chain_code(pts, i):
    """Direction bin in [0, 32) of the motion vector into point i."""
    pts = np.asarray(pts, dtype=np.float64)
    d = pts[i] - pts[i - 1]
    ang = np.arctan2(d[1], d[0]) % (2 * np.pi)
    return int(ang // (2 * np.pi / 32)) % 32


def _baseline_rel(ys, cfg: FeatureConfig):
    """Baseline offset above min(y), computed on translation-relative values
    so translating the ink shifts the result exactly."""
    y_min = ys.min()
    rel = ys - y_min
    span = float(rel.max())
    if span == 0.0:
        return 0.0, 0.0
    counts, edges = np.histogram(rel, bins=cfg.baseline_bins, range=(0.0, span))
    best = int(np.argmax(counts))  # argmax takes the first (lowest) max bin
    return float(0.5 * (edges[best] + edges[best + 1])), span


def detect_baseline(sample: InkSample, cfg: FeatureConfig | None = None):
    """Histogram peak of the vertical point distribution.

    Returns (baseline_y, (upper_y, lower_y)): the center of the most
    populated y bin (ties go to the lower bin) and the middle-zone band
    edges at baseline +/- zone_band_frac * ink height.
    """
    cfg = cfg or FeatureConfig()
    ys = np.concatenate([s.xy[:, 1] for s in sample.strokes])
    if ys.size == 0:
        raise EmptyInput("detect_baseline of empty sample")
    rel, span = _baseline_rel(ys, cfg)
    base = float(ys.min()) + rel
    band = cfg.zone_band_frac * span
    return base, (base + band, base - band)


def _segments_intersect(p, q):
    """Vectorized test of one segment p=(a,b) against segments q=(c,d)."""
    a, b = p
    c, d = q[:, 0], q[:, 1]

    def cross(o, u, v):
        return (u[..., 0] - o[..., 0]) * (v[..., 1] - o[..., 1]) - (
            u[..., 1] - o[..., 1]
        ) * (v[..., 0] - o[..., 0])

    d1 = cross(c, d, a)
    d2 = cross(c, d, b)
    d3 = cross(a[None], b[None], c)
    d4 = cross(a[None], b[None], d)
    proper = ((d1 > 0) & (d2 < 0) | (d1 < 0) & (d2 > 0)) & (
        (d3 > 0) & (d4 < 0) | (d3 < 0) & (d4 > 0)
    )

    def on_seg(o, e, pt):
        return (
            (np.minimum(o[..., 0], e[..., 0]) <= pt[..., 0])
            & (pt[..., 0] <= np.maximum(o[..., 0], e[..., 0]))
            & (np.minimum(o[..., 1], e[..., 1]) <= pt[..., 1])
            & (pt[..., 1] <= np.maximum(o[..., 1], e[..., 1]))
        )

    touch = (
        ((d1 == 0) & on_seg(c, d, a[None]))
        | ((d2 == 0) & on_seg(c, d, b[None]))
        | ((d3 == 0) & on_seg(a[None], b[None], c))
        | ((d4 == 0) & on_seg(a[None], b[None], d))
    )
    return proper | touch


def detect_loops(stroke: Stroke) -> np.ndarray:
    """Per-point flags: True iff the point lies on a closed sub-path between
    a self-intersection of the stroke polyline.

    Adjacent segments always touch at their junction; only pairs at least
    two segments apart are scanned, so a closed path (first point revisited)
    does count as an intersection.
    """
    n = len(stroke)
    flags = np.zeros(n, dtype=bool)
    if n < 4:
        return flags
    xy = stroke.xy
    segs = np.stack([xy[:-1], xy[1:]], axis=1)  # (n-1, 2, 2)
    m = len(segs)
    for i in range(m - 2):
        hits = _segments_intersect((xy[i], xy[i + 1]), segs[i + 2 :])
        if hits.any():
            for j in np.nonzero(hits)[0] + i + 2:
                flags[i + 1 : j + 1] = True
    return flags


def extended_features(pts, i, cfg: FeatureConfig, t=None):
    """(theta, v, rho, a) at point i; convenience scalar wrapper."""
    arr = _extended_block(np.asarray(pts, dtype=np.float64), t, cfg)
    return tuple(arr[i])


def _derivative(vals, t):
    """Central differences over timestamps, one-sided at the edges."""
    n = len(vals)
    out = np.zeros_like(vals, dtype=np.float64)
    if n == 1:
        return out
    dt_c = t[2:] - t[:-2]
    dt_c = np.where(dt_c > 0, dt_c, 1.0)
    out[1:-1] = (vals[2:] - vals[:-2]) / dt_c
    dt0 = t[1] - t[0]
    dtn = t[-1] - t[-2]
    out[0] = (vals[1] - vals[0]) / (dt0 if dt0 > 0 else 1.0)
    out[-1] = (vals[-1] - vals[-2]) / (dtn if dtn > 0 else 1.0)
    return out


def _angle_derivative(theta, t):
    """Like _derivative but differences are wrapped to (-pi, pi]."""
    n = len(theta)
    out = np.zeros_like(theta)
    if n == 1:
        return out

    def wrap(d):
        return (d + np.pi) % (2 * np.pi) - np.pi

    dt_c = t[2:] - t[:-2]
    dt_c = np.where(dt_c > 0, dt_c, 1.0)
    out[1:-1] = wrap(theta[2:] - theta[:-2]) / dt_c
    dt0 = t[1] - t[0]
    dtn = t[-1] - t[-2]
    out[0] = wrap(theta[1] - theta[0]) / (dt0 if dt0 > 0 else 1.0)
    out[-1] = wrap(theta[-1] - theta[-2]) / (dtn if dtn > 0 else 1.0)
    return out


def _extended_block(xy, t, cfg: FeatureConfig):
    n = len(xy)
    if t is None:
        t = np.arange(n, dtype=np.float64)
    eps = cfg.epsilon_log
    if n == 1:
        return np.array([[0.0, 0.0, np.log(eps), 0.0]])
    xdot = _derivative(xy[:, 0], t)
    ydot = _derivative(xy[:, 1], t)
    v = np.hypot(xdot, ydot)
    theta = np.arctan2(ydot, xdot)
    # stationary points carry the previous tangent angle
    still = v == 0.0
    if still.any():
        for i in np.nonzero(still)[0]:
            theta[i] = theta[i - 1] if i > 0 else 0.0
    theta_dot = _angle_derivative(theta, t)
    rho = np.log(np.maximum(v / np.maximum(np.abs(theta_dot), eps), eps))
    vdot = _derivative(v, t)
    a = np.hypot(vdot, v * theta_dot)
    a[still] = 0.0  # stationary points are at rest by definition
    return np.column_stack([theta, v, rho, a])


def _stroke_block(xy, t, relocated, band, cfg: FeatureConfig, loops):
    """The (n, 19) feature block for one normalized stroke."""
    n = len(xy)
    out = np.zeros((n, DIM))

    # direction (backward difference, earlier minus current)
    d = xy[:-1] - xy[1:]
    ds = np.hypot(d[:, 0], d[:, 1])
    ok = ds > 0
    out[1:, 0] = np.where(ok, d[:, 0] / np.where(ok, ds, 1.0), 0.0)
    out[1:, 1] = np.where(ok, d[:, 1] / np.where(ok, ds, 1.0), 0.0)

    # curvature from directions at i-1 and i+1, valid where i +/- 2 exists
    out[:, 2] = 1.0
    if n >= 5:
        ca, sa = out[:, 0], out[:, 1]
        i = np.arange(2, n - 2)
        out[i, 2] = ca[i - 1] * ca[i + 1] + sa[i - 1] * sa[i + 1]
        out[i, 3] = ca[i - 1] * sa[i + 1] - sa[i - 1] * ca[i + 1]

    # curliness / aspect over the clipped vicinity window
    v = cfg.vicinity
    seg_len = np.hypot(*(xy[1:] - xy[:-1]).T) if n > 1 else np.zeros(0)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    lo = np.maximum(np.arange(n) - v, 0)
    hi = np.minimum(np.arange(n) + v, n - 1)
    if n >= 2 * v + 1:
        wins = np.lib.stride_tricks.sliding_window_view(xy, 2 * v + 1, axis=0)
        wmin = wins.min(axis=2)
        wmax = wins.max(axis=2)
        xmin = np.empty(n)
        xmax = np.empty(n)
        ymin = np.empty(n)
        ymax = np.empty(n)
        xmin[v : n - v], ymin[v : n - v] = wmin[:, 0], wmin[:, 1]
        xmax[v : n - v], ymax[v : n - v] = wmax[:, 0], wmax[:, 1]
        for i in list(range(v)) + list(range(n - v, n)):
            win = xy[lo[i] : hi[i] + 1]
            xmin[i], ymin[i] = win.min(axis=0)
            xmax[i], ymax[i] = win.max(axis=0)
    else:
        xmin = np.array([xy[lo[i] : hi[i] + 1, 0].min() for i in range(n)])
        xmax = np.array([xy[lo[i] : hi[i] + 1, 0].max() for i in range(n)])
        ymin = np.array([xy[lo[i] : hi[i] + 1, 1].min() for i in range(n)])
        ymax = np.array([xy[lo[i] : hi[i] + 1, 1].max() for i in range(n)])
    dx = xmax - xmin
    dy = ymax - ymin
    side = np.maximum(dx, dy)
    length = cum[hi] - cum[lo]
    curl = np.where(side >= cfg.epsilon_log, length / np.where(side > 0, side, 1.0) - 2.0, -1.0)
    out[:, 4] = np.maximum(curl, -1.0)
    denom = dx + dy
    out[:, 5] = np.clip(np.where(denom > 0, 2.0 * dy / np.where(denom > 0, denom, 1.0) - 1.0, 0.0), -1.0, 1.0)

    # chain code of the motion vector into each point
    fwd = xy[1:] - xy[:-1]
    moving = (fwd != 0).any(axis=1)
    ang = np.arctan2(fwd[:, 1], fwd[:, 0]) % (2 * np.pi)
    bins = np.floor(ang / (2 * np.pi / 32)).astype(int) % 32
    centers = (bins + 0.5) * (2 * np.pi / 32)
    out[1:, 6] = np.where(moving, np.cos(centers), 0.0)
    out[1:, 7] = np.where(moving, np.sin(centers), 0.0)

    # baseline offset and zones (coordinates already normalized: baseline at
    # y=0, ink height 1, so the band edges are +/- zone_band_frac)
    y = xy[:, 1]
    out[:, 8] = y
    out[:, 9] = y > band
    out[:, 10] = (y >= -band) & (y <= band)
    out[:, 11] = y < -band

    out[:, 12] = loops
    out[:, 13] = 1.0 if relocated else 0.0
    # dim 14 reserved

    out[:, 15:19] = _extended_block(xy, t, cfg)
    return out


def featurize(sample: InkSample, cfg: FeatureConfig | None = None) -> FeatureSequence:
    """Feature matrix for a (rearranged) sample, one frame per point.

    Raises EmptyInput on an empty sample. The hat flag (dim 13) mirrors each
    stroke's is_relocated, so run this after rearrangement.
    """
    cfg = cfg or FeatureConfig()
    if not sample.strokes or sample.n_points == 0:
        raise EmptyInput("featurize of empty sample")
    box = sample_bounding_box(sample)
    h = box.height if box.height > 0 else (box.width if box.width > 0 else 1.0)
    ys = np.concatenate([s.xy[:, 1] for s in sample.strokes])
    base_rel, _ = _baseline_rel(ys, cfg)
    blocks = []
    for s in sample.strokes:
        # translate to the sample's own frame before dividing: differences of
        # exact inputs stay exact, which keeps translation invariance exact
        xy = np.empty_like(s.xy)
        xy[:, 0] = (s.xy[:, 0] - box.x_min) / h
        xy[:, 1] = ((s.xy[:, 1] - box.y_min) - base_rel) / h
        loops = detect_loops(s)
        blocks.append(_stroke_block(xy, s.t, s.is_relocated, cfg.zone_band_frac, cfg, loops))
    return FeatureSequence(frames=np.concatenate(blocks, axis=0))


# --- feature file format -----------------------------------------------------

_MAGIC = "QHWR-FEAT"


def write_features(seq: FeatureSequence) -> bytes:
    lines = ["%s 1 %d %d" % (_MAGIC, len(seq), seq.dim)]
    for row in seq.frames:
        lines.append(" ".join(format(v, ".17g") for v in row))
    return ("\n".join(lines) + "\n").encode("ascii")


def read_features(data: bytes) -> FeatureSequence:
    text = data.decode("ascii")
    lines = text.strip().split("\n")
    head = lines[0].split()
    if len(head) != 4 or head[0] != _MAGIC or head[1] != "1":
        raise ValueError("bad feature file header")
    t, d = int(head[2]), int(head[3])
    if len(lines) - 1 != t:
        raise ValueError("feature file row count mismatch")
    frames = np.array([[float(v) for v in line.split()] for line in lines[1:]], dtype=np.float64)
    frames = frames.reshape(t, d)
    return FeatureSequence(frames=frames)
