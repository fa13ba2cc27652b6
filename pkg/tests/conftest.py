"""Shared fixtures: a small trained toy system used across decoder,
adaptation and discriminative tests."""

import numpy as np
import pytest

from qhwr.hmm import baum_welch, build_models, global_stats
from qhwr.lexicon import build_lexicon, toy_spelling
from qhwr.lm import train_lm
from qhwr.pipeline import PipelineConfig, featurize_corpus, ink_to_features
from qhwr.synth import STATE_COUNTS, SynthConfig, synthesize_word

TOY_WORDS = ["ab", "ba", "cd", "dc", "ad", "bc", "abc", "dba"]


@pytest.fixture(scope="session")
def toy_system():
    """Mono models trained on a tiny 4-grapheme, 8-word corpus."""
    cfg = SynthConfig(seed=5, jitter=0.02, delayed_style="immediate")
    pipe = PipelineConfig()
    alphabet = tuple(sorted(set("".join(TOY_WORDS))))
    samples = []
    for i in range(160):
        word = TOY_WORDS[i % len(TOY_WORDS)]
        samples.append(synthesize_word(word, cfg, writer_index=i % 4, sample_key=i))
    corpus = featurize_corpus(samples, pipe)
    mean, var = global_stats(corpus)
    models = build_models(alphabet, {k: STATE_COUNTS[k] for k in alphabet}, mean, var)
    models, _ = baum_welch(models, corpus, max_iter=8, rel_tol=1e-5)
    lex = build_lexicon(TOY_WORDS, toy_spelling, alphabet=alphabet)
    bigram = train_lm([[w] for w in TOY_WORDS], order=2)
    return {
        "cfg": cfg,
        "pipe": pipe,
        "alphabet": alphabet,
        "models": models,
        "lexicon": lex,
        "bigram": bigram,
        "corpus": corpus,
        "samples": samples,
    }


def toy_obs(word, seed_key=999, writer=0, cfg=None, pipe=None):
    cfg = cfg or SynthConfig(seed=5, jitter=0.02, delayed_style="immediate")
    pipe = pipe or PipelineConfig()
    return ink_to_features(synthesize_word(word, cfg, writer_index=writer, sample_key=seed_key), pipe)
