"""Arabic positional-shape expansion, shipped as configuration.

A letter's shape depends on whether it connects to its neighbours; the six
cutting letters never connect forward, forcing the following letter into
initial (or isolated) shape. The shape tables here follow the transliterated
label scheme of the bundled state-count config; the engine itself is
alphabet-agnostic.
"""

from __future__ import annotations

import json
from importlib import resources

CUTTING_LETTERS = frozenset({"a", "d", "*", "r", "z", "w"})  # ALF DAL ZAL REH ZEN WAW

_LETTERS = (
    "a", "b", "t", "v", "j", "H", "x", "d", "*", "r", "z", "s", "$",
    "S", "D", "T", "Z", "E", "g", "f", "q", "k", "l", "m", "n", "h", "w", "y",
)


def shape_label(letter: str, position: str) -> str:
    """Positional shape label: isolated <x>, initial <x->, medial <-x->,
    final <-x>."""
    if position == "isolated":
        return f"<{letter}>"
    if position == "initial":
        return f"<{letter}->"
    if position == "medial":
        return f"<-{letter}->"
    return f"<-{letter}>"


def positions(letters) -> list[str]:
    """Shape position of each letter given the connection rules."""
    out = []
    prev_connects = False
    for i, letter in enumerate(letters):
        connects_back = prev_connects
        connects_fwd = letter not in CUTTING_LETTERS and i + 1 < len(letters)
        if connects_back and connects_fwd:
            out.append("medial")
        elif connects_fwd:
            out.append("initial")
        elif connects_back:
            out.append("final")
        else:
            out.append("isolated")
        prev_connects = connects_fwd
    return out


def arabic_spelling(word: str) -> list[tuple[str, ...]]:
    """Word (letter string) -> one positional shape-label spelling."""
    letters = list(word)
    for letter in letters:
        if letter not in _LETTERS:
            raise KeyError(f"unknown Arabic letter code {letter!r}")
    return [tuple(shape_label(l, p) for l, p in zip(letters, positions(letters)))]


def arabic_alphabet() -> tuple[str, ...]:
    out = []
    for letter in _LETTERS:
        for pos in ("isolated", "initial", "medial", "final"):
            out.append(shape_label(letter, pos))
    return tuple(sorted(set(out)))


def arabic_state_counts() -> dict:
    doc = json.loads(resources.files("qhwr.data").joinpath("arabic_state_counts.json").read_text())
    counts = dict(doc["counts"])
    counts["*"] = doc["default"]
    return counts


def arabic_questions() -> str:
    return resources.files("qhwr.data").joinpath("arabic_questions.txt").read_text()
