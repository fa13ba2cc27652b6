"""Recognition lexicon: word -> grapheme spellings plus a prefix tree.

Spellings are produced by a caller-supplied function (a word may have
several); duplicate spellings are deduplicated. The prefix tree shares
common spelling prefixes and marks word ends on nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class LexiconError(Exception):
    pass


class UnknownLabel(LexiconError):
    pass


@dataclass
class TreeNode:
    label: str | None
    children: dict = field(default_factory=dict)  # label -> node id
    words: list = field(default_factory=list)


@dataclass
class Lexicon:
    entries: dict  # word -> list of spellings (tuples of labels)
    nodes: list  # TreeNode; nodes[0] is the root

    @property
    def words(self):
        return sorted(self.entries)

    def __contains__(self, word):
        return word in self.entries

    def spelling(self, word):
        return self.entries[word][0]


def build_lexicon(words, spelling_fn, alphabet=None) -> Lexicon:
    """Prefix tree over the spellings of ``words``.

    ``spelling_fn(word)`` returns one spelling (sequence of labels) or a list
    of alternatives. Labels are validated against ``alphabet`` when given.
    """
    words = list(words)
    if not words:
        raise LexiconError("empty word list")
    entries = {}
    for w in words:
        sp = spelling_fn(w)
        if sp and isinstance(sp[0], str):
            sp = [sp]
        uniq = []
        for s in sp:
            s = tuple(s)
            if not s:
                raise LexiconError(f"empty spelling for {w!r}")
            if alphabet is not None:
                for label in s:
                    if label not in alphabet:
                        raise UnknownLabel(f"label {label!r} of word {w!r} not in alphabet")
            if s not in uniq:
                uniq.append(s)
        entries[w] = uniq
    nodes = [TreeNode(label=None)]
    for w in sorted(entries):
        for sp in entries[w]:
            cur = 0
            for label in sp:
                nxt = nodes[cur].children.get(label)
                if nxt is None:
                    nodes.append(TreeNode(label=label))
                    nxt = len(nodes) - 1
                    nodes[cur].children[label] = nxt
                cur = nxt
            nodes[cur].words.append(w)
    return Lexicon(entries=entries, nodes=nodes)


def toy_spelling(word):
    """Toy alphabet words spell as their own characters."""
    return [tuple(word)]


def save_lexicon(lex: Lexicon) -> bytes:
    lines = []
    for w in sorted(lex.entries):
        for sp in lex.entries[w]:
            lines.append(w + "\t" + " ".join(sp))
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_lexicon(data: bytes) -> Lexicon:
    entries = {}
    for ln, line in enumerate(data.decode("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if "\t" not in line:
            raise LexiconError(f"missing tab separator at line {ln}")
        word, labels = line.split("\t", 1)
        entries.setdefault(word, []).append(tuple(labels.split()))
    return build_lexicon(sorted(entries), lambda w: entries[w])
