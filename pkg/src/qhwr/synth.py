"""Deterministic synthetic ink for a 20-grapheme toy alphabet.

Each grapheme has a body polyline drawn right-to-left in a unit box
(baseline at y = 0, entry at (1, 0), exit at (0, 0)) and optionally 1-3
diacritic dots above or below. Words concatenate bodies right-to-left into
a connected trace; the delayed-stroke style controls when dot strokes are
emitted. Writers differ by a geometric shear + scale applied to the ink, so
feature-space adaptation has something real to undo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ink import InkSample, Stroke

DELAYED_STYLES = ("immediate", "afterWord", "intermingled")


@dataclass(frozen=True)
class GraphemeTemplate:
    label: str
    body: tuple[tuple[float, float], ...]
    dots: int = 0
    dots_below: bool = False
    state_count: int = 5
    has_loop: bool = False


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    jitter: float = 0.03
    speed_var: float = 0.15
    delayed_style: str = "immediate"
    context_effect: float = 0.12
    writer_shear: float = 0.22
    writer_scale: float = 0.15
    dot_height: float = 0.8

    def __post_init__(self):
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")
        if self.delayed_style not in DELAYED_STYLES:
            raise ValueError(f"delayed_style must be one of {DELAYED_STYLES}")


def _arc(cx, cy, r, a0, a1, n=12):
    ang = np.linspace(a0, a1, n)
    return [(cx + r * math.cos(a), cy + r * math.sin(a)) for a in ang]


def _densify(pts, step=0.08):
    """Subdivide control segments so bodies are smooth polylines."""
    pts = np.asarray(pts, dtype=np.float64)
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        d = float(np.hypot(*(b - a)))
        k = max(1, int(math.ceil(d / step)))
        for i in range(1, k + 1):
            out.append(a + (b - a) * i / k)
    return np.array(out)


def _make_templates():
    t = {}

    def add(label, body, dots=0, below=False, states=5, loop=False):
        t[label] = GraphemeTemplate(
            label=label,
            body=tuple((float(x), float(y)) for x, y in body),
            dots=dots,
            dots_below=below,
            state_count=states,
            has_loop=loop,
        )

    add("a", [(1, 0), (0, 0)], states=3)
    add("b", [(1, 0), (0.75, -0.22), (0.5, -0.3), (0.25, -0.22), (0, 0)], dots=1, below=True)
    add("c", [(1, 0), (0.75, 0.22), (0.5, 0.3), (0.25, 0.22), (0, 0)], dots=1)
    add("d", [(1, 0), (0.6, 0.02), (0.5, 0.45), (0.4, 0.02), (0, 0)])
    add("e", [(1, 0), (0.65, -0.05), (0.5, -0.45), (0.35, -0.05), (0, 0)])
    add("f", [(1, 0), (0.75, 0.05)] + _arc(0.5, 0.15, 0.22, -0.4 * math.pi, 1.6 * math.pi) + [(0.25, 0.05), (0, 0)], dots=1, states=9, loop=True)
    add("g", [(1, 0), (0.8, 0.3), (0.55, -0.1), (0.35, 0.3), (0, 0)], dots=2, states=7)
    add("h", [(1, 0), (0.85, 0.25), (0.65, 0.02), (0.45, 0.25), (0.25, 0.02), (0, 0)], states=7)
    add("i", [(1, 0), (0.7, -0.1), (0.45, -0.42), (0.2, -0.3), (0, 0)], dots=1, below=True)
    add("j", [(1, 0), (0.62, 0.05), (0.52, 0.5), (0.48, 0.5), (0.42, 0.02), (0, 0)], dots=2, below=True)
    add("k", [(1, 0), (0.6, 0.15), (0.45, 0.35), (0.45, 0.12), (0.2, 0.05), (0, 0)], states=7)
    add("l", [(1, 0), (0.75, 0.0), (0.72, 0.22), (0.45, 0.22), (0.42, 0.0), (0, 0)], states=7)
    add("m", [(1, 0), (0.85, -0.22), (0.65, 0.0), (0.55, 0.4), (0.45, 0.0), (0.2, -0.18), (0, 0)], states=9)
    add("n", [(1, 0), (0.8, 0.18), (0.6, -0.18), (0.4, 0.18), (0.2, -0.18), (0, 0)], dots=1)
    add("o", [(1, 0), (0.72, 0.02)] + _arc(0.5, 0.12, 0.2, -0.5 * math.pi, 1.5 * math.pi) + [(0.28, 0.02), (0, 0)], states=9, loop=True)
    add("p", [(1, 0), (0.3, 0.03), (0, -0.12)], dots=3, states=3)
    add("q", [(1, 0), (0.8, -0.05)] + _arc(0.55, 0.0, 0.18, -0.3 * math.pi, 1.2 * math.pi) + [(0.3, -0.35), (0, -0.1)], dots=2, states=9, loop=True)
    add("r", [(1, 0), (0.55, 0.22), (0, 0.05)], dots=1, below=True, states=3)
    add("s", [(1, 0), (0.85, 0.14), (0.7, -0.14), (0.55, 0.14), (0.4, -0.14), (0.25, 0.14), (0, 0)], dots=3, below=True, states=9)
    add("t", [(1, 0), (0.8, 0.2), (0.6, 0.28), (0.45, -0.2), (0.25, -0.28), (0, 0)], dots=2, states=7)
    return t


TEMPLATES = _make_templates()
ALPHABET = tuple(sorted(TEMPLATES))
STATE_COUNTS = {label: TEMPLATES[label].state_count for label in ALPHABET}

# value in [-1, 1] describing how a neighbour deforms a body's entry/exit
_CTX_VALUE = {label: math.sin(1.7 * i + 0.4) for i, label in enumerate(ALPHABET)}
_CTX_VALUE[None] = 0.0


def writer_transform(writers_seed: int, writer_index: int, cfg: SynthConfig):
    """Per-writer shear + scale; writer 0 is the identity reference."""
    if writer_index == 0:
        return 0.0, 1.0, 1.0
    rng = np.random.default_rng([writers_seed, 7919, writer_index])
    shear = float(rng.uniform(-cfg.writer_shear, cfg.writer_shear))
    sx = float(rng.uniform(1 - cfg.writer_scale, 1 + cfg.writer_scale))
    sy = float(rng.uniform(1 - cfg.writer_scale, 1 + cfg.writer_scale))
    return shear, sx, sy


def _body_points(tpl: GraphemeTemplate, left, right, cfg: SynthConfig):
    pts = _densify(tpl.body)
    if cfg.context_effect:
        # neighbours bend the connecting ends of the body
        lv = _CTX_VALUE[right]  # entry side (x near 1) touches the previous glyph
        rv = _CTX_VALUE[left]
        x = pts[:, 0]
        pts = pts.copy()
        pts[:, 1] += cfg.context_effect * lv * np.clip(x - 0.7, 0, None) / 0.3 * 0.5
        pts[:, 1] += cfg.context_effect * rv * np.clip(0.3 - x, 0, None) / 0.3 * 0.5
    return pts


def _dot_strokes(tpl: GraphemeTemplate, offset, cfg: SynthConfig):
    out = []
    if not tpl.dots:
        return out
    y = -cfg.dot_height if tpl.dots_below else cfg.dot_height
    spread = 0.14
    xs = [0.5 + (i - (tpl.dots - 1) / 2) * spread for i in range(tpl.dots)]
    for x in xs:
        ring = np.array(_arc(offset + x, y, 0.035, 0.0, 1.6 * math.pi, n=6))
        out.append(ring)
    return out


def _word_geometry(word, cfg: SynthConfig):
    """Per-grapheme body point arrays (in word coordinates, rightmost first)
    and dot stroke arrays grouped per grapheme."""
    bodies, dots = [], []
    n = len(word)
    for k, label in enumerate(word):
        tpl = TEMPLATES[label]
        left = word[k + 1] if k + 1 < n else None  # neighbour later in reading order sits to the left
        right = word[k - 1] if k > 0 else None
        offset = -float(k)  # grapheme k occupies x in [offset, offset + 1]
        pts = _body_points(tpl, left, right, cfg)
        pts = pts + np.array([offset, 0.0])
        bodies.append(pts)
        dots.append(_dot_strokes(tpl, offset, cfg))
    return bodies, dots


def _emit_order(n, dots_per_grapheme, style):
    """Sequence of ('body', k) / ('dot', k, j) emission events."""
    events = []
    if style == "immediate":
        for k in range(n):
            events.append(("body", k))
            events.extend(("dot", k, j) for j in range(dots_per_grapheme[k]))
    elif style == "afterWord":
        events.extend(("body", k) for k in range(n))
        for k in range(n):
            events.extend(("dot", k, j) for j in range(dots_per_grapheme[k]))
    else:  # intermingled: flush pending dots after every second grapheme
        pending = []
        for k in range(n):
            events.append(("body", k))
            pending.extend(("dot", k, j) for j in range(dots_per_grapheme[k]))
            if k % 2 == 1:
                events.extend(pending)
                pending = []
        events.extend(pending)
    return events


def synthesize_word(
    word,
    cfg: SynthConfig | None = None,
    writer_index: int = 0,
    writer_id: str | None = None,
    sample_key: int = 0,
    templates=None,
) -> InkSample:
    """Deterministic ink for a grapheme-label sequence.

    Bodies are merged into connected strokes where emission is consecutive;
    dot strokes are separate. The transcript is attached.
    """
    cfg = cfg or SynthConfig()
    templates = templates or TEMPLATES
    word = tuple(word)
    for label in word:
        if label not in templates:
            raise KeyError(f"unknown grapheme label {label!r}")
    rng = np.random.default_rng([cfg.seed, 104729, writer_index, sample_key])

    bodies, dots = _word_geometry(word, cfg)
    events = _emit_order(len(word), [len(d) for d in dots], cfg.delayed_style)

    # consecutive body events merge into one connected stroke
    raw_strokes = []
    open_body = None
    for ev in events:
        if ev[0] == "body":
            pts = bodies[ev[1]]
            if open_body is None:
                open_body = [pts]
            else:
                open_body.append(pts[1:])  # shared junction point
        else:
            if open_body is not None:
                raw_strokes.append(np.concatenate(open_body))
                open_body = None
            raw_strokes.append(dots[ev[1]][ev[2]])
    if open_body is not None:
        raw_strokes.append(np.concatenate(open_body))

    shear, sx, sy = writer_transform(cfg.seed, writer_index, cfg)
    speed = 1.0 + (float(rng.uniform(-cfg.speed_var, cfg.speed_var)) if cfg.speed_var else 0.0)

    strokes = []
    t0 = 0.0
    for i, pts in enumerate(raw_strokes):
        pts = np.asarray(pts, dtype=np.float64)
        if cfg.jitter:
            pts = pts + rng.normal(scale=cfg.jitter, size=pts.shape)
        out = np.empty_like(pts)
        out[:, 0] = sx * pts[:, 0] + shear * pts[:, 1]
        out[:, 1] = sy * pts[:, 1]
        seg = np.hypot(*np.diff(out, axis=0).T) if len(out) > 1 else np.zeros(0)
        t = t0 + np.concatenate([[0.0], np.cumsum(seg)]) * 10.0 / speed
        t0 = float(t[-1]) + 30.0  # pen-up gap
        strokes.append(Stroke(xy=out, t=t, source_id=i))
    return InkSample(
        strokes=tuple(strokes),
        writer_id=writer_id if writer_id is not None else f"w{writer_index:02d}",
        transcript=word,
    )


def make_lexicon(n_words=200, seed=0, min_len=2, max_len=4):
    """Deterministic list of unique words over the toy alphabet."""
    rng = np.random.default_rng([seed, 15485863])
    words = []
    seen = set()
    while len(words) < n_words:
        n = int(rng.integers(min_len, max_len + 1))
        w = "".join(ALPHABET[int(i)] for i in rng.integers(0, len(ALPHABET), n))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def synthesize_corpus(words, n_samples, n_writers, cfg: SynthConfig | None = None, split=(0.8, 0.1, 0.1)):
    """Balanced corpus: sample i pairs word (i // n_writers) % len(words)
    with writer i % n_writers, so every word meets every writer evenly.

    Returns (samples, manifest). The manifest holds index lists for the
    train/adapt/test splits (writer-stratified, deterministic) plus the word
    of every sample.
    """
    cfg = cfg or SynthConfig()
    samples = []
    meta = []
    for i in range(n_samples):
        writer = i % n_writers
        word = words[(i // n_writers) % len(words)]
        samples.append(synthesize_word(word, cfg, writer_index=writer, sample_key=i))
        meta.append({"index": i, "writer": f"w{writer:02d}", "words": [word]})
    by_writer = {}
    for m in meta:
        by_writer.setdefault(m["writer"], []).append(m["index"])
    manifest = {"train": [], "adapt": [], "test": [], "samples": meta, "seed": cfg.seed}
    for w in sorted(by_writer):
        idx = by_writer[w]
        n = len(idx)
        n_train = int(round(split[0] * n))
        n_adapt = int(round(split[1] * n))
        manifest["train"].extend(idx[:n_train])
        manifest["adapt"].extend(idx[n_train : n_train + n_adapt])
        manifest["test"].extend(idx[n_train + n_adapt :])
    for key in ("train", "adapt", "test"):
        manifest[key].sort()
    return samples, manifest


def synthesize_sentence(
    word_seq,
    cfg: SynthConfig | None = None,
    writer_index: int = 0,
    sample_key: int = 0,
    gap: float = 0.6,
) -> InkSample:
    """Multi-word ink: words placed right-to-left with a gap between them.

    The transcript is the concatenated grapheme sequence.
    """
    cfg = cfg or SynthConfig()
    pieces = []
    offset = 0.0
    source = 0
    transcript = []
    for word in word_seq:
        one = synthesize_word(word, cfg, writer_index=writer_index, sample_key=sample_key * 131 + source)
        for s in one.strokes:
            xy = s.xy + np.array([offset, 0.0])
            pieces.append(Stroke(xy=xy, t=s.t, source_id=source))
            source += 1
        transcript.extend(word)
        offset -= len(word) + gap
    return InkSample(
        strokes=tuple(pieces),
        writer_id=f"w{writer_index:02d}",
        transcript=tuple(transcript),
    )
