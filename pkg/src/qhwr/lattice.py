"""Word lattices: the pass-1 to pass-2 contract.

Nodes are (frame, language-model history class) pairs; for the bigram first
pass the class is the last word. Arcs carry the word, its ink-model score,
its (unscaled) language-model log probability, and per-grapheme frame spans.
Sentence-end events are explicit "</s>" arcs into the end node, so rescoring
revisits them like any other arc.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .util import dump_canonical

END_WORD = "</s>"
START_HIST = "<s>"


@dataclass(frozen=True)
class LatticeNode:
    frame: int
    hist: str  # last word (or start/end marker)


@dataclass
class LatticeArc:
    src: int  # node index
    dst: int
    word: str
    ink: float
    lm: float
    spans: tuple = ()  # ((label, start_frame, end_frame), ...)


@dataclass
class WordLattice:
    t_len: int
    nodes: list  # LatticeNode
    arcs: list  # LatticeArc
    start: int
    end: int

    def out_arcs(self):
        out = [[] for _ in self.nodes]
        for i, a in enumerate(self.arcs):
            out[a.src].append(i)
        return out

    def check(self):
        for a in self.arcs:
            if not (0 <= self.nodes[a.src].frame <= self.nodes[a.dst].frame <= self.t_len):
                raise ValueError("arc frames out of range")
        return self


class EmptyLattice(Exception):
    pass


def _arc_score(arc: LatticeArc, lm_scale, penalty):
    s = arc.ink + lm_scale * arc.lm
    if arc.word != END_WORD:
        s += penalty
    return s


def prune_to_paths(lat: WordLattice) -> WordLattice:
    """Drop arcs/nodes that are not on any start -> end path."""
    n = len(lat.nodes)
    fwd = [False] * n
    fwd[lat.start] = True
    order = sorted(range(n), key=lambda i: (lat.nodes[i].frame, i))
    out = lat.out_arcs()
    for i in order:
        if not fwd[i]:
            continue
        for ai in out[i]:
            fwd[lat.arcs[ai].dst] = True
    bwd = [False] * n
    bwd[lat.end] = True
    for i in reversed(order):
        for ai in out[i]:
            if bwd[lat.arcs[ai].dst]:
                bwd[i] = True
    keep_nodes = [i for i in range(n) if fwd[i] and bwd[i]]
    if lat.start not in keep_nodes or lat.end not in keep_nodes:
        raise EmptyLattice("no start->end path survived")
    remap = {old: new for new, old in enumerate(keep_nodes)}
    nodes = [lat.nodes[i] for i in keep_nodes]
    arcs = [
        replace(a, src=remap[a.src], dst=remap[a.dst])
        for a in lat.arcs
        if a.src in remap and a.dst in remap
    ]
    return WordLattice(t_len=lat.t_len, nodes=nodes, arcs=arcs, start=remap[lat.start], end=remap[lat.end])


def lattice_nbest(lat: WordLattice, n, lm_scale, penalty, arc_bonus=None):
    """Top-n distinct word sequences by total score.

    ``arc_bonus(prev_arc_index, arc_index)`` adds a pairwise adjustment
    (cross-word boundary acoustics); when given, per-node hypothesis lists
    are not capped so the pairwise DP stays exact. Ties break
    lexicographically on the word sequence. Returns (words, total, ink, lm)
    tuples, best first.
    """
    if not lat.arcs:
        raise EmptyLattice("lattice has no arcs")
    out = lat.out_arcs()
    order = sorted(range(len(lat.nodes)), key=lambda i: (lat.nodes[i].frame, i))
    cap = None if arc_bonus is not None else 8 * n + 16
    # hyp: (score, words, ink, lm, prev_arc)
    best: dict[int, list] = {lat.start: [(0.0, (), 0.0, 0.0, -1)]}
    for i in order:
        hyps = best.get(i)
        if not hyps:
            continue
        if cap is not None and len(hyps) > cap:
            hyps = _top(hyps, cap)
        for ai in out[i]:
            arc = lat.arcs[ai]
            for score, words, ink, lmv, prev in hyps:
                bonus = arc_bonus(prev, ai) if arc_bonus is not None else 0.0
                s = score + arc.ink + bonus + lm_scale * arc.lm
                if arc.word != END_WORD:
                    s += penalty
                    w2 = words + (arc.word,)
                else:
                    w2 = words
                best.setdefault(arc.dst, []).append((s, w2, ink + arc.ink + bonus, lmv + arc.lm, ai))
    finals = best.get(lat.end)
    if not finals:
        raise EmptyLattice("no complete path")
    finals = _top(finals, len(finals))
    seen = set()
    results = []
    for s, words, ink, lmv, _ in finals:
        if words in seen:
            continue
        seen.add(words)
        results.append((words, s, ink, lmv))
        if len(results) == n:
            break
    return results


def expand_lattice(lat: WordLattice, lm, order) -> WordLattice:
    """Re-key nodes so each carries its (order-1)-word history uniquely and
    restamp every arc with the given model's probability.

    The path set (and each path's ink score) is preserved exactly, so
    expansion with the original model reproduces the original ranking.
    """
    hist_len = max(order - 1, 0)
    key_to_id = {}
    nodes = []
    arcs = []

    def node_id(orig, hist):
        key = (orig, hist)
        nid = key_to_id.get(key)
        if nid is None:
            nid = len(nodes)
            key_to_id[key] = nid
            nodes.append(LatticeNode(frame=lat.nodes[orig].frame, hist="|".join(hist) or START_HIST))
        return nid

    out = lat.out_arcs()
    start = node_id(lat.start, (START_HIST,)[:hist_len])
    end_ids = set()
    stack = [(lat.start, (START_HIST,)[:hist_len])]
    seen = {(lat.start, (START_HIST,)[:hist_len])}
    while stack:
        orig, hist = stack.pop()
        src = node_id(orig, hist)
        for ai in out[orig]:
            arc = lat.arcs[ai]
            lmv = lm.logp(arc.word if arc.word != END_WORD else "</s>", list(hist))
            if arc.word == END_WORD:
                dst = node_id(arc.dst, ("</s>",)[:hist_len])
                end_ids.add(dst)
            else:
                new_hist = (hist + (arc.word,))[-hist_len:] if hist_len else ()
                dst = node_id(arc.dst, new_hist)
                if (arc.dst, new_hist) not in seen:
                    seen.add((arc.dst, new_hist))
                    stack.append((arc.dst, new_hist))
            arcs.append(replace(arc, src=src, dst=dst, lm=lmv))
    if len(end_ids) > 1:
        # merge distinct end histories into one terminal node
        final = len(nodes)
        nodes.append(LatticeNode(frame=lat.t_len, hist="</s>"))
        for a in arcs:
            if a.dst in end_ids:
                a.dst = final
        end = final
    elif end_ids:
        end = next(iter(end_ids))
    else:
        raise EmptyLattice("no end-of-sentence arcs to expand")
    return WordLattice(t_len=lat.t_len, nodes=nodes, arcs=arcs, start=start, end=end)


def _top(hyps, k):
    return sorted(hyps, key=lambda h: (-h[0], h[1]))[:k]


def lattice_best(lat: WordLattice, lm_scale, penalty):
    return lattice_nbest(lat, 1, lm_scale, penalty)[0]


def oracle_errors(lat: WordLattice, reference) -> int:
    """Minimum word edit distance between the reference and any lattice path."""
    from .metrics import levenshtein

    out = lat.out_arcs()
    order = sorted(range(len(lat.nodes)), key=lambda i: (lat.nodes[i].frame, i))
    paths: dict[int, set] = {lat.start: {()}}
    for i in order:
        for ai in out[i]:
            arc = lat.arcs[ai]
            for words in paths.get(i, ()):
                w2 = words if arc.word == END_WORD else words + (arc.word,)
                paths.setdefault(arc.dst, set()).add(w2)
    finals = paths.get(lat.end)
    if not finals:
        raise EmptyLattice("no complete path")
    return min(levenshtein(list(w), list(reference)) for w in finals)


# --- serialization -----------------------------------------------------------


def lattice_to_dict(lat: WordLattice) -> dict:
    return {
        "version": 1,
        "frames": lat.t_len,
        "start": lat.start,
        "end": lat.end,
        "nodes": [{"frame": nd.frame, "hist": nd.hist} for nd in lat.nodes],
        "arcs": [
            {
                "from": a.src,
                "to": a.dst,
                "word": a.word,
                "inkLogLik": a.ink,
                "lmLogProb": a.lm,
                "spans": [[label, s, e] for label, s, e in a.spans],
            }
            for a in lat.arcs
        ],
    }


def save_lattice(lat: WordLattice) -> bytes:
    return dump_canonical(lattice_to_dict(lat))


def load_lattice(data: bytes) -> WordLattice:
    doc = json.loads(data.decode("utf-8"))
    nodes = [LatticeNode(frame=int(n["frame"]), hist=n["hist"]) for n in doc["nodes"]]
    arcs = [
        LatticeArc(
            src=int(a["from"]),
            dst=int(a["to"]),
            word=a["word"],
            ink=float(a["inkLogLik"]),
            lm=float(a["lmLogProb"]),
            spans=tuple((s[0], int(s[1]), int(s[2])) for s in a["spans"]),
        )
        for a in doc["arcs"]
    ]
    return WordLattice(
        t_len=int(doc["frames"]), nodes=nodes, arcs=arcs, start=int(doc["start"]), end=int(doc["end"])
    ).check()
