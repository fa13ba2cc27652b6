"""Minimum grapheme error training.

The objective is the posterior-weighted grapheme accuracy over enumerated
hypothesis sets (n-best lists standing in for lattices): each hypothesis H
of a sample contributes softmax_H(k * inkLogLik + lmLogProb) * A(H, H_ref)
where A is reference length minus edit errors. Parameters move by extended
Baum-Welch over signed (numerator - denominator) occupancies, with the
smoothing constant doubled until an update stops hurting the objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .decoder import DecodeConfig, decode_labels, decode_pass1
from .features import FeatureSequence
from .hmm import (
    EmissionTable,
    Gmm,
    ModelSet,
    PathInfeasible,
    TrainStats,
    forward_backward,
    viterbi_align,
)
from .metrics import levenshtein
from .util import logsumexp


class MgeError(Exception):
    pass


class DecoderFailure(MgeError):
    pass


class InsufficientHypotheses(MgeError):
    pass


class EmptyHypotheses(MgeError):
    pass


@dataclass(frozen=True)
class MgeConfig:
    kappa: float = 0.1
    ebw_d: float | None = None  # None -> 2x the max denominator occupancy
    iterations: int = 5
    ebw_e: float = 2.0
    nbest: int = 20

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.ebw_d is not None and self.ebw_d <= 0:
            raise ValueError("ebw_d must be positive")


@dataclass
class Hypothesis:
    labels: tuple
    ink: float
    lm: float


@dataclass
class HypothesisSet:
    reference: tuple
    hypotheses: list  # of Hypothesis

    def __post_init__(self):
        if not self.hypotheses:
            raise EmptyHypotheses("hypothesis set must be nonempty")


def grapheme_accuracy(hyp, ref) -> int:
    """Reference length minus edit errors (may go negative on long wrong
    hypotheses, like the count it mirrors)."""
    return len(tuple(ref)) - levenshtein(tuple(hyp), tuple(ref))


def _posteriors(hs: HypothesisSet, kappa):
    scores = np.array([kappa * h.ink + h.lm for h in hs.hypotheses])
    return np.exp(scores - logsumexp(scores))


def mge_objective(hyp_sets, cfg: MgeConfig) -> float:
    """Posterior-weighted grapheme accuracy, summed over samples."""
    total = 0.0
    for hs in hyp_sets:
        q = _posteriors(hs, cfg.kappa)
        acc = np.array([grapheme_accuracy(h.labels, hs.reference) for h in hs.hypotheses])
        total += float(q @ acc)
    return total


def score_all_words(modelset: ModelSet, lex, obs: FeatureSequence, table=None):
    """Viterbi ink log-likelihood of every lexicon word, batched.

    Words whose minimum path exceeds T score -inf.
    """
    table = table or EmissionTable(modelset)
    words = sorted(lex.entries)
    comps = []
    for w in words:
        labels = decode_labels(lex, w, modelset.context_dependent)
        comps.append(modelset.composite(list(labels)))
    s_max = max(c.n_states for c in comps)
    n_w = len(words)
    ids = np.zeros((n_w, s_max), dtype=np.int64)
    lself = np.full((n_w, s_max), -np.inf)
    ladv = np.full((n_w, s_max), -np.inf)
    lens = np.zeros(n_w, dtype=np.int64)
    for i, c in enumerate(comps):
        n = c.n_states
        ids[i, :n] = c.gmm_ids
        lself[i, :n] = c.log_self
        ladv[i, :n] = c.log_adv
        lens[i] = n
    frames = obs.frames
    t_len = frames.shape[0]
    emis_pool, _ = table.state_logliks(frames, np.arange(len(modelset.pool)))
    delta = np.full((n_w, s_max), -np.inf)
    delta[:, 0] = emis_pool[0][ids[:, 0]]
    for t in range(1, t_len):
        stay = delta + lself
        move = np.full_like(delta, -np.inf)
        move[:, 1:] = delta[:, :-1] + ladv[:, :-1]
        delta = np.maximum(stay, move) + emis_pool[t][ids]
    final = delta[np.arange(n_w), lens - 1] + ladv[np.arange(n_w), lens - 1]
    final = np.where(lens <= t_len, final, -np.inf)
    return dict(zip(words, final))


def make_exhaustive_decoder(lex, lm, n_best=20):
    """Single-word n-best over the whole lexicon; always includes the
    reference word's hypothesis. Exact and fast for isolated-word corpora."""

    def decode(modelset, obs, ref_labels, table=None):
        scores = score_all_words(modelset, lex, obs, table=table)
        scored = []
        for w in sorted(scores):
            ink = scores[w]
            if ink == -np.inf:
                continue
            lmv = lm.score_sentence([w])
            labels = tuple(decode_labels(lex, w, modelset.context_dependent))
            scored.append((ink + lmv, Hypothesis(labels=labels, ink=float(ink), lm=float(lmv))))
        if not scored:
            raise DecoderFailure("no feasible word for sample")
        scored.sort(key=lambda x: -x[0])
        hyps = [h for _, h in scored[:n_best]]
        if not any(h.labels == tuple(ref_labels) for h in hyps):
            for _, h in scored:
                if h.labels == tuple(ref_labels):
                    hyps.append(h)
                    break
        return hyps

    return decode


def make_lattice_decoder(lex, bigram, decode_cfg: DecodeConfig | None = None, n_best=20):
    """n-best from pass-1 lattices; hypotheses are concatenated word
    spellings. The reference is appended via forced alignment if missing."""
    cfg = decode_cfg or DecodeConfig()

    def decode(modelset, obs, ref_labels, table=None):
        from .decoder import NoPathSurvived

        try:
            _, res = decode_pass1(modelset, lex, bigram, obs, replace_nbest(cfg, n_best), want_spans=False)
        except NoPathSurvived as e:
            raise DecoderFailure(str(e)) from e
        hyps = []
        for words, total, ink, lmv in res.hypotheses:
            labels = tuple(l for w in words for l in decode_labels(lex, w, modelset.context_dependent))
            hyps.append(Hypothesis(labels=labels, ink=float(ink), lm=float(lmv)))
        if not any(h.labels == tuple(ref_labels) for h in hyps):
            try:
                ink, _ = viterbi_align(modelset, list(ref_labels), obs)
                hyps.append(Hypothesis(labels=tuple(ref_labels), ink=float(ink), lm=0.0))
            except PathInfeasible:
                pass
        return hyps

    return decode


def replace_nbest(cfg: DecodeConfig, n):
    return DecodeConfig(
        beam=cfg.beam,
        max_active=cfg.max_active,
        lm_scale=cfg.lm_scale,
        word_insertion_penalty=cfg.word_insertion_penalty,
        nbest_n=n,
    )


def _ebw_update(modelset: ModelSet, num: TrainStats, den: TrainStats, cfg: MgeConfig, d_factor=1.0):
    """Extended Baum-Welch means/variances/weights; transitions untouched."""
    global_d = cfg.ebw_d if cfg.ebw_d is not None else max(2.0 * float(den.occ.max()), 1.0)
    new_pool = []
    for i, g in enumerate(modelset.pool):
        m = g.n_components
        n_occ, d_occ = num.occ[i, :m], den.occ[i, :m]
        if n_occ.sum() + d_occ.sum() < 1e-8:
            new_pool.append(g)
            continue
        d_g = np.maximum(cfg.ebw_e * d_occ, global_d) * d_factor
        means = g.means
        variances = g.variances
        for _ in range(60):
            denom = (n_occ - d_occ + d_g)[:, None]
            if (denom <= 1e-3).any():
                d_g = d_g * 2
                continue
            mean = (num.x[i, :m] - den.x[i, :m] + d_g[:, None] * means) / denom
            var = (
                num.xx[i, :m] - den.xx[i, :m] + d_g[:, None] * (variances + means**2)
            ) / denom - mean**2
            if (var <= 0).any():
                d_g = d_g * 2
                continue
            break
        else:
            new_pool.append(g)
            continue
        var = np.maximum(var, modelset.variance_floor[None, :])
        tau = max(2.0 * float(d_occ.sum()), 1.0) * d_factor
        w = (n_occ - d_occ + tau * g.weights) / (n_occ.sum() - d_occ.sum() + tau)
        w = np.maximum(w, 1e-8)
        w = w / w.sum()
        new_pool.append(Gmm(weights=w, means=mean, variances=var))
    return replace(modelset, pool=new_pool)


def _hyp_sets(modelset, corpus, decoder_fn):
    table = EmissionTable(modelset)
    sets = []
    for transcript, obs in corpus:
        ref = tuple(transcript)
        hyps = decoder_fn(modelset, obs, ref, table=table)
        if not hyps:
            raise InsufficientHypotheses("decoder produced no hypotheses")
        sets.append(HypothesisSet(reference=ref, hypotheses=hyps))
    return sets


def _rescore_sets(modelset, corpus, hyp_sets):
    """Recompute every hypothesis ink score under new parameters."""
    table = EmissionTable(modelset)
    out = []
    for (transcript, obs), hs in zip(corpus, hyp_sets):
        new_hyps = []
        for h in hs.hypotheses:
            try:
                ink, _ = viterbi_align(modelset, list(h.labels), obs, table=table)
            except PathInfeasible:
                continue
            new_hyps.append(Hypothesis(labels=h.labels, ink=float(ink), lm=h.lm))
        if new_hyps:
            out.append(HypothesisSet(reference=hs.reference, hypotheses=new_hyps))
    return out


def mge_train(modelset: ModelSet, corpus, decoder_fn, cfg: MgeConfig | None = None):
    """Iterate: regenerate n-best sets, accumulate accuracy-weighted signed
    statistics, apply EBW; reject (by doubling the smoothing constant) any
    update that lowers the objective on the current sets.

    ``corpus``: (transcript, FeatureSequence) pairs; ``decoder_fn`` as built
    by make_exhaustive_decoder / make_lattice_decoder. Returns
    (models, objective history): history[0] is the starting objective.
    """
    cfg = cfg or MgeConfig()
    corpus = list(corpus)
    if not corpus:
        raise MgeError("empty corpus")
    history = []
    for it in range(cfg.iterations):
        # transcripts the decoder cannot reach (T too short) are dropped once
        if it == 0:
            usable = []
            for transcript, obs in corpus:
                comp = modelset.composite(list(transcript))
                if len(obs.frames) >= comp.n_states:
                    usable.append((transcript, obs))
            corpus = usable
            if not corpus:
                raise MgeError("no feasible samples")
        hyp_sets = _hyp_sets(modelset, corpus, decoder_fn)
        f_old = mge_objective(hyp_sets, cfg)
        if it == 0:
            history.append(f_old)
        num = TrainStats(modelset)
        den = TrainStats(modelset)
        table = EmissionTable(modelset)
        for (transcript, obs), hs in zip(corpus, hyp_sets):
            q = _posteriors(hs, cfg.kappa)
            acc = np.array([grapheme_accuracy(h.labels, hs.reference) for h in hs.hypotheses])
            avg = float(q @ acc)
            weights = q * (acc - avg)
            for h, w in zip(hs.hypotheses, weights):
                if abs(w) < 1e-10:
                    continue
                target = num if w > 0 else den
                try:
                    forward_backward(
                        modelset, list(h.labels), obs, stats=target, weight=abs(float(w)), table=table
                    )
                except PathInfeasible:
                    continue
        accepted = modelset
        d_factor = 1.0
        for _ in range(8):
            cand = _ebw_update(modelset, num, den, cfg, d_factor=d_factor)
            rescored = _rescore_sets(cand, corpus, hyp_sets)
            f_new = mge_objective(rescored, cfg) if rescored else -np.inf
            if f_new >= f_old - 1e-6:
                accepted = cand
                f_old = f_new
                break
            d_factor *= 2.0
        modelset = accepted
        history.append(f_old)
    return modelset, history
