"""Two-pass lexicon decoding.

Pass 1 is a time-synchronous Viterbi beam search over prefix-tree copies,
one token per (tree state, previous word), with the bigram applied at word
ends and beam + histogram pruning per frame. Surviving word-end hypotheses
become lattice arcs. Pass 2 expands that lattice so every node carries its
(order-1)-gram history and rescores with a higher-order model, optionally
re-evaluating boundary graphemes with cross-word context models.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureSequence
from .hmm import EmissionTable, ModelSet, PathInfeasible, viterbi_align
from .lattice import (
    END_WORD,
    START_HIST,
    EmptyLattice,
    LatticeArc,
    LatticeNode,
    WordLattice,
    expand_lattice,
    lattice_nbest,
    prune_to_paths,
)
from .lexicon import Lexicon
from .lm import NGramModel
from .tying import BOUNDARY, SEP, expand_labels, is_tri_label


class DecodeError(Exception):
    pass


class NoPathSurvived(DecodeError):
    """Beam too tight (or observation infeasible); caller may widen."""


@dataclass(frozen=True)
class DecodeConfig:
    beam: float = 200.0
    max_active: int = 5000
    lm_scale: float = 10.0
    word_insertion_penalty: float = 0.0
    nbest_n: int = 10

    def __post_init__(self):
        if self.beam <= 0:
            raise ValueError("beam must be positive")
        if self.max_active < 1:
            raise ValueError("max_active must be >= 1")


@dataclass
class RecognitionResult:
    """Ranked hypotheses: (words, total score, ink loglik, lm logprob)."""

    hypotheses: list

    def words(self, rank=0):
        return self.hypotheses[rank][0]

    def __len__(self):
        return len(self.hypotheses)


def decode_labels(lex: Lexicon, word, context_dependent):
    """The model-label spelling of a word (word-internal trigraphemes for
    context-dependent sets)."""
    sp = lex.spelling(word)
    return tuple(expand_labels(sp)) if context_dependent else tuple(sp)


class DecodingGraph:
    """Flattened (lexicon x models) search network.

    States are HMM emitting states of prefix-tree nodes; each word's spelling
    is expanded per the model set's context mode before tree construction, so
    the same lexicon drives mono and tri decoding.
    """

    def __init__(self, models: ModelSet, lex: Lexicon):
        self.models = models
        self.lex = lex
        cd = models.context_dependent
        # rebuild the prefix tree over decode labels
        tree = [{"children": {}, "words": [], "label": None}]
        for w in sorted(lex.entries):
            labels = decode_labels(lex, w, cd)
            cur = 0
            for label in labels:
                nxt = tree[cur]["children"].get(label)
                if nxt is None:
                    tree.append({"children": {}, "words": [], "label": label})
                    nxt = len(tree) - 1
                    tree[cur]["children"][label] = nxt
                cur = nxt
            tree[cur]["words"].append(w)

        gmm, lself, ladv, node_of, nxt_state = [], [], [], [], []
        self.node_first = []
        self.node_words = []
        self.node_children = []
        for ni, node in enumerate(tree):
            self.node_words.append(sorted(node["words"]))
            self.node_children.append([node["children"][k] for k in sorted(node["children"])])
            if ni == 0:
                self.node_first.append(-1)
                continue
            m = models.model_for(node["label"])
            s, a = m.self_adv()
            first = len(gmm)
            self.node_first.append(first)
            for k in range(m.n_states):
                gmm.append(m.state_ids[k])
                lself.append(s[k])
                ladv.append(a[k])
                node_of.append(ni)
                nxt_state.append(first + k + 1 if k + 1 < m.n_states else -1)
        self.gmm = np.array(gmm, dtype=np.int64)
        self.log_self = np.array(lself)
        self.log_adv = np.array(ladv)
        self.node_of = node_of
        self.next_state = nxt_state
        self.root_children = self.node_children[0]
        self.table = EmissionTable(models)

    def emissions(self, obs: FeatureSequence):
        ids = np.arange(len(self.models.pool))
        emis, _ = self.table.state_logliks(obs.frames, ids)
        return emis  # (T, pool)


def decode_pass1(
    models: ModelSet,
    lex: Lexicon,
    bigram: NGramModel,
    obs: FeatureSequence,
    cfg: DecodeConfig | None = None,
    graph: DecodingGraph | None = None,
    want_spans: bool = True,
):
    """(WordLattice, RecognitionResult) via token passing.

    Deterministic given the config; ties break lexicographically when
    hypotheses are ranked. Raises NoPathSurvived when pruning (or a too-short
    observation) kills every hypothesis.
    """
    cfg = cfg or DecodeConfig()
    g = graph if graph is not None else DecodingGraph(models, lex)
    frames = obs.frames
    t_len = frames.shape[0]
    if t_len == 0:
        raise NoPathSurvived("empty observation")
    emis = g.emissions(obs)

    # backpointer records: (prev_bp, word, start_frame, end_frame, ink_at_end, lm)
    bps = [(-1, START_HIST, 0, 0, 0.0, 0.0)]
    arcs_raw = []  # (bp_prev, word, start, end, ink_arc, lm)
    active = {}

    def seed(target, t, base_total, base_ink, bp, hist):
        for child in target:
            s0 = g.node_first[child]
            e = emis[t, g.gmm[s0]]
            key = (s0, hist)
            val = (base_total + e, base_ink + e, bp)
            cur = active.get(key)
            if cur is None or val[0] > cur[0]:
                active[key] = val

    prev = {}
    for t in range(t_len):
        active = {}
        if t == 0:
            seed(g.root_children, 0, 0.0, 0.0, 0, START_HIST)
        else:
            for (s, hist), (total, ink, bp) in prev.items():
                e_stay = emis[t, g.gmm[s]]
                ns = g.log_self[s]
                key = (s, hist)
                val = (total + ns + e_stay, ink + ns + e_stay, bp)
                cur = active.get(key)
                if cur is None or val[0] > cur[0]:
                    active[key] = val
                base = total + g.log_adv[s]
                bink = ink + g.log_adv[s]
                nxt = g.next_state[s]
                if nxt >= 0:
                    e = emis[t, g.gmm[nxt]]
                    key = (nxt, hist)
                    val = (base + e, bink + e, bp)
                    cur = active.get(key)
                    if cur is None or val[0] > cur[0]:
                        active[key] = val
                else:
                    node = g.node_of[s]
                    if g.node_children[node]:
                        seed(g.node_children[node], t, base, bink, bp, hist)
                    for w in g.node_words[node]:
                        lm = bigram.logp(w, [hist])
                        total_w = base + cfg.lm_scale * lm + cfg.word_insertion_penalty
                        start = bps[bp][3]
                        ink_arc = bink - bps[bp][4]
                        arcs_raw.append((bp, w, start, t, ink_arc, lm))
                        bps.append((bp, w, start, t, bink, lm))
                        seed(g.root_children, t, total_w, bink, len(bps) - 1, w)
        if not active:
            raise NoPathSurvived(f"beam emptied at frame {t}")
        # beam + histogram pruning
        best = max(v[0] for v in active.values())
        floor = best - cfg.beam
        active = {k: v for k, v in active.items() if v[0] >= floor}
        if len(active) > cfg.max_active:
            keep = sorted(active.items(), key=lambda kv: (-kv[1][0], kv[0]))[: cfg.max_active]
            active = dict(keep)
        prev = active

    # finalization at boundary T: close words and apply the end-of-sentence term
    finals = []  # (total, bp_id_of_final_word)
    for (s, hist), (total, ink, bp) in prev.items():
        if g.next_state[s] != -1:
            continue
        node = g.node_of[s]
        base = total + g.log_adv[s]
        bink = ink + g.log_adv[s]
        for w in g.node_words[node]:
            lm = bigram.logp(w, [hist])
            start = bps[bp][3]
            ink_arc = bink - bps[bp][4]
            arcs_raw.append((bp, w, start, t_len, ink_arc, lm))
            bps.append((bp, w, start, t_len, bink, lm))
            lm_end = bigram.logp("</s>", [w])
            total_w = base + cfg.lm_scale * (lm + lm_end) + cfg.word_insertion_penalty
            finals.append((total_w, len(bps) - 1))
    if not finals:
        raise NoPathSurvived("no word end reachable at the final frame")

    lat = _build_lattice(g, bps, arcs_raw, bigram, t_len, models, lex, obs, want_spans)
    results = lattice_nbest(lat, cfg.nbest_n, cfg.lm_scale, cfg.word_insertion_penalty)
    return lat, RecognitionResult(hypotheses=results)


def _build_lattice(g, bps, arcs_raw, bigram, t_len, models, lex, obs, want_spans):
    node_ids = {}
    nodes = []

    def node(frame, hist):
        key = (frame, hist)
        nid = node_ids.get(key)
        if nid is None:
            nid = len(nodes)
            node_ids[key] = nid
            nodes.append(LatticeNode(frame=frame, hist=hist))
        return nid

    start = node(0, START_HIST)
    arcs = []
    seen = {}
    for bp, w, s, e, ink, lm in arcs_raw:
        hist_prev = bps[bp][1]
        key = (s, hist_prev, e, w)
        cur = seen.get(key)
        if cur is not None and arcs[cur].ink >= ink:
            continue
        arc = LatticeArc(src=node(s, hist_prev), dst=node(e, w), word=w, ink=ink, lm=lm)
        if cur is not None:
            arcs[cur] = arc
        else:
            seen[key] = len(arcs)
            arcs.append(arc)
    end = node(t_len, END_WORD)
    for (frame, hist), nid in list(node_ids.items()):
        if frame == t_len and hist != END_WORD:
            arcs.append(LatticeArc(src=nid, dst=end, word=END_WORD, ink=0.0, lm=bigram.logp("</s>", [hist])))
    lat = prune_to_paths(
        WordLattice(t_len=t_len, nodes=nodes, arcs=arcs, start=start, end=end)
    )
    if want_spans:
        _fill_spans(lat, models, lex, obs)
    return lat.check()


def _fill_spans(lat: WordLattice, models: ModelSet, lex: Lexicon, obs: FeatureSequence):
    """Viterbi grapheme boundaries for every surviving word arc."""
    cache = {}
    for arc in lat.arcs:
        if arc.word == END_WORD:
            continue
        s, e = lat.nodes[arc.src].frame, lat.nodes[arc.dst].frame
        key = (arc.word, s, e)
        if key in cache:
            arc.spans = cache[key]
            continue
        labels = decode_labels(lex, arc.word, models.context_dependent)
        try:
            _, path = viterbi_align(models, list(labels), FeatureSequence(frames=obs.frames[s:e]))
        except PathInfeasible:
            arc.spans = ()
            continue
        comp_sizes = [models.model_for(l).n_states for l in labels]
        bounds = np.cumsum([0] + comp_sizes)
        spans = []
        for gi, label in enumerate(labels):
            in_g = np.nonzero((path >= bounds[gi]) & (path < bounds[gi + 1]))[0]
            spans.append((label, s + int(in_g[0]), s + int(in_g[-1]) + 1))
        arc.spans = tuple(spans)
        cache[key] = arc.spans


def rescore_pass2(
    lattice: WordLattice,
    lm5: NGramModel,
    models: ModelSet | None = None,
    cfg: DecodeConfig | None = None,
    obs: FeatureSequence | None = None,
    lex: Lexicon | None = None,
) -> RecognitionResult:
    """Expand the lattice to unique (order-1)-gram histories, restamp LM
    scores, optionally re-evaluate boundary graphemes with cross-word
    contexts, and extract the n-best.

    Never removes paths: the expanded path set equals the pass-1 path set.
    """
    cfg = cfg or DecodeConfig()
    if not lattice.arcs:
        raise EmptyLattice("empty lattice")
    expanded = expand_lattice(lattice, lm5, lm5.order)
    bonus = None
    if models is not None:
        if obs is None or lex is None:
            raise ValueError("cross-word rescoring needs obs and lex")
        bonus = _cross_word_bonus(expanded, models, lex, obs)
    results = lattice_nbest(expanded, cfg.nbest_n, cfg.lm_scale, cfg.word_insertion_penalty, arc_bonus=bonus)
    return RecognitionResult(hypotheses=results)


def _edge_graphemes(spans):
    first = spans[0][0]
    last = spans[-1][0]
    return first, last


def _with_context(label, left=None, right=None):
    """Replace boundary markers of a word-internal tri label."""
    if not is_tri_label(label):
        return label
    l, c, r = label.split(SEP)
    if left is not None:
        l = left
    if right is not None:
        r = right
    return SEP.join((l, c, r))


def _center(label):
    return label.split(SEP)[1] if is_tri_label(label) else label


def _cross_word_bonus(lat: WordLattice, models: ModelSet, lex: Lexicon, obs: FeatureSequence):
    """Pairwise arc adjustment re-evaluating boundary graphemes with the
    context implied by the adjoining arcs (fixed Viterbi segmentation)."""
    if not models.context_dependent:
        return None
    table = EmissionTable(models)
    reval_cache = {}

    def span_loglik(label, s, e):
        key = (label, s, e)
        v = reval_cache.get(key)
        if v is None:
            try:
                v, _ = viterbi_align(models, [label], FeatureSequence(frames=obs.frames[s:e]), table=table)
            except PathInfeasible:
                v = None
            reval_cache[key] = v
        return v

    def bonus(prev_ai, ai):
        arc = lat.arcs[ai]
        if prev_ai < 0:
            return 0.0
        prev = lat.arcs[prev_ai]
        if prev.word == END_WORD or not prev.spans:
            return 0.0
        total = 0.0
        if arc.word == END_WORD:
            return 0.0
        if not arc.spans:
            return 0.0
        prev_last = _center(prev.spans[-1][0])
        cur_first = _center(arc.spans[0][0])
        # right boundary of the previous word now sees this word's first grapheme
        label, s, e = prev.spans[-1]
        old = span_loglik(label, s, e)
        new = span_loglik(_with_context(label, right=cur_first), s, e)
        if old is not None and new is not None:
            total += new - old
        # left boundary of this word sees the previous word's last grapheme
        label, s, e = arc.spans[0]
        old = span_loglik(label, s, e)
        new = span_loglik(_with_context(label, left=prev_last), s, e)
        if old is not None and new is not None:
            total += new - old
        return total

    return bonus


def decode_streaming(models, lex, bigram, obs, cfg=None, every=10, graph=None):
    """Prefix decodes every ``every`` frames: yields (frame, words so far).

    A measurement aid for streamed-output latency; the final yield matches
    decode_pass1's best hypothesis.
    """
    cfg = cfg or DecodeConfig()
    g = graph if graph is not None else DecodingGraph(models, lex)
    t_len = len(obs.frames)
    for t in list(range(every, t_len, every)) + [t_len]:
        part = FeatureSequence(frames=obs.frames[:t])
        try:
            _, res = decode_pass1(models, lex, bigram, part, cfg, graph=g, want_spans=False)
            yield t, res.words(0)
        except (NoPathSurvived, EmptyLattice):
            yield t, ()
