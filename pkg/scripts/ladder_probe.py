#!/usr/bin/env python3
"""Scratch probe of the full training ladder at desk scale (timing + accuracy).

Not part of the deliverable pipeline; run_recipe formalizes this flow.
"""

import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import numpy as np

from qhwr.cmllr import apply_transform, estimate_cmllr, writer_adaptive_train
from qhwr.decoder import DecodeConfig, DecodingGraph, decode_pass1, NoPathSurvived
from qhwr.hmm import baum_welch, build_models, global_stats, split_mixtures
from qhwr.lexicon import build_lexicon, toy_spelling
from qhwr.lm import train_lm
from qhwr.metrics import evaluate
from qhwr.mge import MgeConfig, make_exhaustive_decoder, mge_train
from qhwr.pipeline import PipelineConfig, featurize_corpus
from qhwr.synth import STATE_COUNTS, SynthConfig, make_lexicon, synthesize_corpus
from qhwr.tying import collect_context_stats, expand_labels, grow_tree, prime_models, tie_models
from qhwr.lexicon import Lexicon


def main(n_samples=2000, n_writers=10, n_words=200):
    t0 = time.time()

    def mark(msg):
        print(f"[{time.time() - t0:7.1f}s] {msg}", flush=True)

    words = make_lexicon(n_words, seed=3)
    cfg = SynthConfig(seed=7, jitter=0.035, delayed_style="intermingled")
    samples, manifest = synthesize_corpus(words, n_samples, n_writers, cfg)
    mark(f"synthesized {len(samples)}")
    pipe = PipelineConfig()
    feats = featurize_corpus(samples, pipe)
    mark(f"featurized; mean T = {np.mean([len(o.frames) for _, o in feats]):.1f}")

    train_idx, test_idx = manifest["train"], manifest["test"]
    train = [feats[i] for i in train_idx]
    test = [feats[i] for i in test_idx]
    test_words = [manifest["samples"][i]["words"] for i in test_idx]
    test_writers = [manifest["samples"][i]["writer"] for i in test_idx]
    writer_of = {i: manifest["samples"][i]["writer"] for i in range(n_samples)}

    alphabet = tuple(sorted(STATE_COUNTS))
    lex = build_lexicon(words, toy_spelling, alphabet=alphabet)
    bigram = train_lm([[w] for w in words], order=2)
    dc = DecodeConfig(beam=120.0, max_active=2000, lm_scale=3.0, nbest_n=10)

    def eval_models(ms, transforms=None, label=""):
        graph = DecodingGraph(ms, lex)
        results = []
        t1 = time.time()
        for obs, writer in zip((o for _, o in test), test_writers):
            if transforms is not None and writer in transforms:
                obs = apply_transform(transforms[writer], obs)
            try:
                _, res = decode_pass1(ms, lex, bigram, obs, dc, graph=graph, want_spans=False)
            except NoPathSurvived:
                res = type("R", (), {"hypotheses": []})()
            results.append(res)
        rep = evaluate(results, test_words, ns=(1, 5, 10), lexicon=lex)
        mark(f"eval[{label}] top1={rep['topN']['1']:.4f} top5={rep['topN']['5']:.4f} ({time.time()-t1:.1f}s decode)")
        return rep

    mean, var = global_stats(train)
    ms = build_models(alphabet, STATE_COUNTS, mean, var)
    ms, hist = baum_welch(ms, train, max_iter=12, rel_tol=1e-4)
    mark(f"ML trained, {len(hist)} iters")
    rep0 = eval_models(ms, label="ML")

    by_writer = {}
    for i in train_idx:
        by_writer.setdefault(writer_of[i], []).append(feats[i])
    ms_wat, transforms = writer_adaptive_train(ms, by_writer, rounds=2, bw_iters=4)
    mark("WAT done")
    rep1 = eval_models(ms_wat, transforms, label="WAT")

    train_tr = []
    for w in sorted(by_writer):
        tr = transforms[w]
        train_tr.extend((t, apply_transform(tr, o)) for t, o in by_writer[w])
    mge_dec = make_exhaustive_decoder(lex, bigram, n_best=8)
    ms_mge, mhist = mge_train(ms_wat, train_tr, mge_dec, MgeConfig(kappa=0.1, iterations=3, nbest=8))
    mark(f"MGE done, objective {mhist[0]:.1f} -> {mhist[-1]:.1f}")
    rep2 = eval_models(ms_mge, transforms, label="MGE")

    stats = collect_context_stats(ms_mge, train_tr)
    from qhwr.tying import Question
    # toy questions: grapheme families by template shape class
    groups = {
        "updown": set("cdghkl"), "low": set("bei"), "loops": set("foq"),
        "flat": set("apr"), "multi": set("mnst"), "tall": set("dj"),
    }
    questions = [Question(name="L-bound", side="L", members=frozenset({"#"})),
                 Question(name="R-bound", side="R", members=frozenset({"#"}))]
    for name, g in sorted(groups.items()):
        questions.append(Question(name=f"L-{name}", side="L", members=frozenset(g)))
        questions.append(Question(name=f"R-{name}", side="R", members=frozenset(g)))
    for l in alphabet:
        questions.append(Question(name=f"L-is-{l}", side="L", members=frozenset({l})))
        questions.append(Question(name=f"R-is-{l}", side="R", members=frozenset({l})))
    tree = grow_tree(stats, questions, min_occupancy=120.0, min_gain=250.0)
    mark(f"tree grown: {tree.n_leaves} leaves (from {len(ms.pool)} mono states)")
    ms_tri = tie_models(ms_mge, tree)
    tri_train = [(tuple(expand_labels(t)), o) for t, o in train_tr]
    prime_models(ms_tri, [t for t, _ in train_tr])
    ms_tri, _ = baum_welch(ms_tri, tri_train, max_iter=6, rel_tol=1e-4)
    mark("tri trained")
    rep3 = eval_models(ms_tri, transforms, label="TRI")

    ms_mix = split_mixtures(ms_tri, 4, tri_train, retrain_iters=4)
    mark("mixtures 1->2->4 trained")
    rep4 = eval_models(ms_mix, transforms, label="MIX")

    mark("ladder: " + " ".join(f"{r['topN']['1']:.4f}" for r in (rep0, rep1, rep2, rep3, rep4)))


if __name__ == "__main__":
    import argparse

    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--writers", type=int, default=10)
    ap.add_argument("--words", type=int, default=200)
    a = ap.parse_args()
    main(a.samples, a.writers, a.words)
