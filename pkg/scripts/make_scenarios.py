#!/usr/bin/env python3
"""Build the committed delayed-stroke scenario corpus.

Cases come in two kinds:

* constructed: straight bodies with exactly known segment arithmetic, so the
  canonical output order (which dot precedes which body run) is computed
  here from geometry, independent of the reordering code;
* synthesized: toy-alphabet words in the delayed-writing styles, checked in
  the test suite by canonical-position properties (the stored output order
  is a regression anchor, recorded from a hand-verified run).

Run from the repo root: python3 scripts/make_scenarios.py
"""

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from qhwr.ink import InkSample, Stroke, save_ink
from qhwr.reorder import ReorderConfig, rearrange
from qhwr.synth import SynthConfig, synthesize_word

SEGMENT_SIZE = 5
BODY_N = 41  # x = 10 .. 0 in steps of 0.25; segments of 5 span 1.0 in x


def body_stroke(source_id=0, y=0.0):
    xs = np.linspace(10.0, 0.0, BODY_N)
    return [[float(x), y] for x in xs]


def seg_max_x(k):
    # farthest x of the k-th 5-point segment of the standard body
    return 10.0 - 1.25 * k


def constructed_case(name, dots, dot_order=None, note=""):
    """Body + dot strokes; expected order computed from segment arithmetic.

    ``dots``: list of (x, y) single-point dot strokes, given in canonical
    (descending-x) order. ``dot_order`` permutes their writing order.
    """
    n_segs = (BODY_N + SEGMENT_SIZE - 1) // SEGMENT_SIZE
    order = dot_order if dot_order is not None else list(range(len(dots)))
    strokes = [body_stroke(0)]
    for i in order:
        x, y = dots[i]
        strokes.append([[x, y], [x + 0.05, y + 0.05]])
    dot_source = {i: pos + 1 for pos, i in enumerate(order)}

    # canonical interleaving: before each segment k, every unemitted dot with
    # farthest x strictly above the segment's farthest x goes first,
    # rightmost first
    remaining = sorted(range(len(dots)), key=lambda i: -max(dots[i][0], dots[i][0] + 0.05))
    runs = []
    host_pos = 0
    for k in range(n_segs):
        fired = [i for i in remaining if dots[i][0] + 0.05 > seg_max_x(k)]
        if fired:
            if host_pos < k * SEGMENT_SIZE:
                runs.append([0, k * SEGMENT_SIZE - host_pos, False])
                host_pos = k * SEGMENT_SIZE
            for i in fired:
                runs.append([dot_source[i], 2, True])
                remaining.remove(i)
    if host_pos < BODY_N:
        runs.append([0, BODY_N - host_pos, False])
    for i in remaining:  # dots never inserted keep their input position
        runs.append([dot_source[i], 2, False])
    if not any(r[2] for r in runs):
        # nothing moved: the sample passes through untouched
        runs = [[0, BODY_N, False]] + [[dot_source[i], 2, False] for i in order]
    return {
        "name": name,
        "kind": "constructed",
        "segmentSize": SEGMENT_SIZE,
        "ink": {"strokes": strokes},
        "expectedRuns": runs,
        "note": note,
    }


def overlap_case(name, variant, note):
    """Connected/overlapping letter bodies with nothing delayed -> identity.

    The second stroke continues from the first one's end point (cursive
    junction); its farthest point never strictly beats a running segment.
    """
    s1 = [[float(x), 0.0] for x in np.linspace(10.0, 5.0, 21)]
    if variant == 0:
        s2 = [[float(x), 0.6] for x in np.linspace(5.0, 0.0, 21)]
    else:
        # tall second letter leaning back over the first in y, x touching
        xs = np.linspace(5.0, 0.0, 21)
        s2 = [[float(x), float(0.6 + 1.5 * np.exp(-((x - 4.5) ** 2)))] for x in xs]
    return {
        "name": name,
        "kind": "constructed",
        "segmentSize": SEGMENT_SIZE,
        "ink": {"strokes": [s1, s2]},
        "expectedRuns": [[0, 21, False], [1, 21, False]],
        "note": note,
    }


def prebody_case(name, dot_x, note):
    """Delayed mark written before the body (pen starts with the dot).

    Pass 1 pulls the whole body ahead of the mark; the repeated pass then
    drops the mark into its x position inside the body. Relocation flags are
    sticky, so the split body runs stay flagged.
    """
    dot = [[dot_x, 1.0], [dot_x + 0.05, 1.05]]
    strokes = [dot, body_stroke(1)]
    n_segs = (BODY_N + SEGMENT_SIZE - 1) // SEGMENT_SIZE
    k_star = next(
        (k for k in range(n_segs) if dot_x + 0.05 > seg_max_x(k)),
        None,
    )
    split = k_star * SEGMENT_SIZE
    if split == 0:
        runs = [[0, 2, True], [1, BODY_N, True]]
    else:
        runs = [[1, split, True], [0, 2, True], [1, BODY_N - split, True]]
    return {
        "name": name,
        "kind": "constructed",
        "segmentSize": SEGMENT_SIZE,
        "ink": {"strokes": strokes},
        "expectedRuns": runs,
        "note": note,
    }


def two_word_case(name):
    """Delayed dots of the right word must not jump into the left word."""
    w1 = [[float(x), 0.0] for x in np.linspace(10.0, 6.0, 21)]  # right word
    w2 = [[float(x), 0.0] for x in np.linspace(4.0, 0.0, 21)]  # left word
    d1 = [[8.0, 1.0], [8.05, 1.05]]  # belongs to w1
    d2 = [[2.0, 1.0], [2.05, 1.05]]  # belongs to w2
    strokes = [w1, w2, d1, d2]
    # canonical: w1 splits around d1; w2 splits around d2
    # w1 segments (5 pts, 0.2 x-steps): seg k max x = 10 - k; d1 beats seg 3 (max 7.8...)
    # compute exactly below instead of hand-arithmetic
    xs1 = np.linspace(10.0, 6.0, 21)
    runs = []
    # walk w1: dots with x beyond segment max fire first
    rem = [("d1", 8.05, 2), ("d2", 2.05, 3)]
    pos = 0
    for k in range(5):
        seg = xs1[k * 5 : k * 5 + 5]
        if len(seg) == 0:
            break
        fired = [d for d in rem if d[1] > seg.max()]
        if fired:
            if pos < k * 5:
                runs.append([0, k * 5 - pos, False])
                pos = k * 5
            for d in sorted(fired, key=lambda x: -x[1]):
                runs.append([d[2], 2, True])
                rem.remove(d)
    if pos < 21:
        runs.append([0, 21 - pos, False])
    xs2 = np.linspace(4.0, 0.0, 21)
    pos = 0
    for k in range(5):
        seg = xs2[k * 5 : k * 5 + 5]
        if len(seg) == 0:
            break
        fired = [d for d in rem if d[1] > seg.max()]
        if fired:
            if pos < k * 5:
                runs.append([1, k * 5 - pos, False])
                pos = k * 5
            for d in sorted(fired, key=lambda x: -x[1]):
                runs.append([d[2], 2, True])
                rem.remove(d)
    if pos < 21:
        runs.append([1, 21 - pos, False])
    return {
        "name": name,
        "kind": "constructed",
        "segmentSize": 5,
        "ink": {"strokes": strokes},
        "expectedRuns": runs,
        "note": "two words, one delayed dot each; dots stay inside their word",
    }


def synth_case(name, word, style, seed=2):
    cfg = SynthConfig(seed=seed, jitter=0.0, delayed_style=style, context_effect=0.0)
    sample = synthesize_word(word, cfg)
    out, report = rearrange(sample, ReorderConfig(segment_size=10))
    runs = [[s.source_id, len(s), bool(s.is_relocated)] for s in out.strokes]
    return {
        "name": name,
        "kind": "synth",
        "segmentSize": 10,
        "word": word,
        "style": style,
        "seed": seed,
        "ink": {"strokes": [s.xy.tolist() for s in sample.strokes]},
        "expectedRuns": runs,
        "note": "regression anchor; canonical-position properties asserted in tests",
    }


def main():
    cases = []
    # single delayed dot at descending positions (KAF/HAMZA-style insertion
    # into the middle of a character body)
    for i, x in enumerate((9.9, 8.0, 5.6, 3.1, 0.9)):
        cases.append(
            constructed_case(
                f"mid-body-dot-{i}", [(x, 1.0)], note="single delayed mark lands inside the body"
            )
        )
    # dot below the baseline behaves the same
    cases.append(constructed_case("below-dot", [(6.2, -1.0)], note="mark below baseline"))
    # dot left of all ink: no insertion, order unchanged
    cases.append(constructed_case("dot-never-beats", [(-0.5, 1.0)], note="no insertion happens"))
    # several dots, canonical descending order, written in assorted orders
    dots = [(8.6, 1.0), (6.1, 1.0), (3.6, 1.0), (1.1, 1.0)]
    for i, order in enumerate(([0, 1, 2, 3], [3, 2, 1, 0], [1, 3, 0, 2])):
        cases.append(
            constructed_case(
                f"many-dots-order-{i}",
                dots,
                dot_order=order,
                note="writing order of delayed marks must not matter",
            )
        )
    # permutation-explosion analog: 8 marks, two writing orders
    dots8 = [(9.2 - 1.1 * i, (1.0 if i % 2 == 0 else -1.0)) for i in range(8)]
    for i, order in enumerate(([0, 1, 2, 3, 4, 5, 6, 7], [7, 5, 3, 1, 6, 4, 2, 0])):
        cases.append(
            constructed_case(
                f"eight-marks-order-{i}", dots8, dot_order=order, note="8 marks, 8! orders collapse to one"
            )
        )
    # two dots racing for the same boundary: rightmost emitted first
    cases.append(
        constructed_case(
            "same-boundary-pair",
            [(6.0, 1.0), (5.7, 1.0)],
            dot_order=[1, 0],
            note="both fire before one segment; descending x",
        )
    )
    # overlapped letters (no delayed strokes) stay untouched
    cases.append(overlap_case("overlapped-letters-0", 0, "connected bodies, nothing delayed"))
    cases.append(overlap_case("overlapped-letters-1", 1, "tall letter leaning back, nothing delayed"))
    # delayed mark written before its body
    cases.append(prebody_case("pre-body-mark-0", 8.0, "mark written first; body pulled ahead"))
    cases.append(prebody_case("pre-body-mark-1", 2.0, "mark written first, far left"))
    # two words with one delayed dot each
    cases.append(two_word_case("two-words"))
    # synthesized toy words across delayed styles
    for word in ("bqt", "gsi", "cnr"):
        for style in ("afterWord", "intermingled"):
            cases.append(synth_case(f"word-{word}-{style}", word, style))
    for word in ("pjf", "tbs"):
        cases.append(synth_case(f"word-{word}-afterWord", word, "afterWord"))

    out = Path(__file__).resolve().parent.parent / "tests" / "data" / "reorder_scenarios.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({"version": 1, "cases": cases}, indent=1))
    print(f"wrote {len(cases)} cases to {out}")


if __name__ == "__main__":
    main()
