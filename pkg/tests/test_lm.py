import itertools
import math

import numpy as np
import pytest

from qhwr.lm import (
    EOS,
    SOS,
    UNK,
    ArpaParseError,
    EmptyCorpus,
    NGramModel,
    context_normalization,
    read_arpa,
    train_lm,
    write_arpa,
)


def test_hand_computed_witten_bell():
    lm = train_lm([["a", "b"]] * 100, order=2)
    # vocab = {a, b, <s>, </s>, <unk>}; unigram events: a, b, </s> (100 each)
    v = 5
    base = 1 / v
    p_uni_b = (100 + 3 * base) / (300 + 3)
    assert abs(math.exp(lm.logp("b")) - p_uni_b) < 1e-12
    # context 'a': c=100, one continuation type
    p_b_given_a = (100 + 1 * p_uni_b) / (100 + 1)
    assert abs(math.exp(lm.logp("b", ["a"])) - p_b_given_a) < 1e-12
    assert lm.logp("b", ["a"]) > lm.logp("a", ["a"])
    # unseen bigram backs off: bow(a) * P_uni(a)
    bow_a = 1 / (100 + 1)
    p_uni_a = p_uni_b
    assert abs(math.exp(lm.logp("a", ["a"])) - bow_a * p_uni_a) < 1e-12


def test_unseen_token_scored_via_unk():
    lm = train_lm([["a", "b"], ["b", "a"]], order=2)
    assert lm.logp("zzz", ["a"]) == lm.logp(UNK, ["a"])
    assert np.isfinite(lm.logp("zzz", ["zzz"]))


def test_order_1_plain_unigram():
    lm = train_lm([["x", "y", "x"]], order=1)
    assert lm.order == 1
    assert math.exp(lm.logp("x")) > math.exp(lm.logp("y"))
    assert abs(sum(math.exp(lm.logp(w)) for w in lm.vocab) - 1.0) < 1e-9


def test_empty_corpus():
    with pytest.raises(EmptyCorpus):
        train_lm([], order=2)


def test_score_uses_start_marker():
    lm = train_lm([["a", "b"], ["b", "a"]], order=2)
    assert abs(lm.score(["a"]) - lm.logp("a", [SOS])) < 1e-12


def test_score_additive_chain_rule():
    lm = train_lm([["a", "b", "c"], ["c", "b", "a"]], order=2)
    toks = ["a", "b", "c", "a"]
    total = lm.score(toks)
    stepwise = sum(lm.logp(t, [SOS] + toks[:i]) for i, t in enumerate(toks))
    assert abs(total - stepwise) < 1e-12


def test_corpus_sentence_beats_shuffle():
    lines = [["the", "cat", "sat"]] * 50 + [["a", "dog", "ran"]] * 50
    lm = train_lm(lines, order=2)
    assert lm.score_sentence(["the", "cat", "sat"]) > lm.score_sentence(["sat", "the", "cat"])


@pytest.mark.parametrize("order", [1, 2, 3])
def test_per_context_normalization_exhaustive(order):
    rng = np.random.default_rng(4)
    vocab = ["a", "b", "c", "d"]
    lines = [[vocab[i] for i in rng.integers(0, 4, rng.integers(1, 6))] for _ in range(50)]
    lm = train_lm(lines, order=order)
    contexts = [()]
    if order >= 2:
        contexts += [(w,) for w in lm.vocab]
    if order >= 3:
        contexts += list(itertools.product(lm.vocab, repeat=2))
    for ctx in contexts:
        assert abs(context_normalization(lm, ctx) - 1.0) < 1e-6, ctx


def test_more_data_never_lowers_probability():
    base = [["a", "b"], ["a", "c"]]
    lm1 = train_lm(base * 5, order=2)
    lm2 = train_lm(base * 5 + [["a", "b"]] * 10, order=2)
    assert lm2.logp("b", ["a"]) >= lm1.logp("b", ["a"])


def test_arpa_round_trip_scores():
    rng = np.random.default_rng(9)
    vocab = ["a", "b", "c"]
    lines = [[vocab[i] for i in rng.integers(0, 3, rng.integers(1, 5))] for _ in range(30)]
    lm = train_lm(lines, order=2)
    again = read_arpa(write_arpa(lm))
    for gram, (lp, _) in lm.tables[1].items():
        assert abs(again.tables[1][gram][0] - lp) < 1e-9
    toks = ["a", "c", "b"]
    assert abs(lm.score(toks) - again.score(toks)) < 1e-9


def test_arpa_header_counts_match():
    lm = train_lm([["a", "b"]], order=2)
    text = write_arpa(lm).decode()
    for k in range(2):
        n = int([l for l in text.splitlines() if l.startswith(f"ngram {k + 1}=")][0].split("=")[1])
        assert n == len(lm.tables[k])


def test_arpa_malformed_header():
    with pytest.raises(ArpaParseError):
        read_arpa(b"\\dat\\\nngram 1=2\n\\end\\\n")


def test_arpa_missing_end():
    lm = train_lm([["a"]], order=1)
    broken = write_arpa(lm).decode().replace("\\end\\", "")
    with pytest.raises(ArpaParseError):
        read_arpa(broken.encode())


def test_arpa_count_mismatch():
    lm = train_lm([["a"]], order=1)
    text = write_arpa(lm).decode()
    text = text.replace("ngram 1=", "ngram 1=9")
    with pytest.raises(ArpaParseError):
        read_arpa(text.encode())


def test_arpa_byte_stable():
    lines = [["a", "b", "c"], ["b", "a"]] * 3
    assert write_arpa(train_lm(lines, 2)) == write_arpa(train_lm(lines, 2))


def test_fifth_gram_trains_and_scores():
    lines = [["w1", "x", "y", "z", "w2"]] * 20 + [["w3", "x", "y", "z", "w4"]] * 20
    lm = train_lm(lines, order=5)
    # long-range dependency: w2 after w1..., w4 after w3...
    good = lm.score(["w1", "x", "y", "z", "w2"])
    bad = lm.score(["w1", "x", "y", "z", "w4"])
    assert good > bad
