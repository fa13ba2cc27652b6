import numpy as np
import pytest

from qhwr.features import FeatureSequence
from qhwr.hmm import baum_welch, build_models, forward_backward, global_stats, load_models, save_models
from qhwr.tying import (
    ContextStats,
    NoStats,
    Question,
    Trigrapheme,
    collect_context_stats,
    expand_labels,
    expand_trigraphemes,
    grow_tree,
    load_questions,
    prime_models,
    save_questions,
    tie_models,
)


def seq(arr):
    return FeatureSequence(frames=np.asarray(arr, dtype=np.float64).reshape(len(arr), -1))


# --- expansion -----------------------------------------------------------------


def test_expand_single():
    out = expand_trigraphemes(["m"])
    assert out == [Trigrapheme(None, "m", None)]
    assert out[0].label == "#|m|#"


def test_expand_bmd():
    out = expand_trigraphemes(["b", "m", "d"])
    assert out == [
        Trigrapheme(None, "b", "m"),
        Trigrapheme("b", "m", "d"),
        Trigrapheme("m", "d", None),
    ]


@pytest.mark.parametrize("n", [1, 2, 5, 9])
def test_expand_preserves_length(n):
    rng = np.random.default_rng(n)
    transcript = [chr(97 + int(i)) for i in rng.integers(0, 5, n)]
    assert len(expand_trigraphemes(transcript)) == n


# --- questions -----------------------------------------------------------------


def test_question_file_round_trip():
    qs = [
        Question(name="L-cut", side="L", members=frozenset({"a", "d", "#"})),
        Question(name="R-tall", side="R", members=frozenset({"d", "j"})),
    ]
    again = load_questions(save_questions(qs))
    assert again == qs


def test_question_boundary_matching():
    q = Question(name="L-bound", side="L", members=frozenset({"#"}))
    assert q.ask(Trigrapheme(None, "x", "y"))
    assert not q.ask(Trigrapheme("a", "x", "y"))


# --- tree growth -----------------------------------------------------------------


def two_group_stats(dim=1, sep=4.0, occ=500.0):
    """Two context groups with well-separated means."""
    stats = ContextStats(dim=dim)
    for left, mean in (("a", -sep / 2), ("b", sep / 2)):
        e = stats.entry("x", 0, left, "c")
        n = occ
        e[0] += n
        e[1] += np.full(dim, mean) * n
        e[2] += (np.full(dim, mean) ** 2 + 0.25) * n  #的 variance 0.25
    return stats


def analytic_gain(stats):
    """Oracle: single-Gaussian loglik gain of the perfect split."""

    def ll(occ, sx, sxx):
        mean = sx / occ
        var = np.maximum(sxx / occ - mean**2, 1e-8)
        d = len(mean)
        return -0.5 * occ * (d * (1 + np.log(2 * np.pi)) + np.log(var).sum())

    entries = list(stats.table[("x", 0)].values())
    occ = sum(e[0] for e in entries)
    sx = sum(e[1] for e in entries)
    sxx = sum(e[2] for e in entries)
    parent = ll(occ, sx, sxx)
    split = sum(ll(*e) for e in entries)
    return split - parent


def test_grow_tree_splits_separated_groups():
    stats = two_group_stats()
    gain = analytic_gain(stats)
    assert gain > 0
    qs = [Question(name="L-a", side="L", members=frozenset({"a"}))]
    tree = grow_tree(stats, qs, min_occupancy=10, min_gain=gain * 0.5)
    node = tree.trees[("x", 0)]
    assert not node.is_leaf
    assert node.question.name == "L-a"
    assert tree.n_leaves == 2


def test_grow_tree_min_gain_inf_gives_single_leaves():
    stats = two_group_stats()
    qs = [Question(name="L-a", side="L", members=frozenset({"a"}))]
    tree = grow_tree(stats, qs, min_occupancy=1, min_gain=float("inf"))
    assert tree.n_leaves == 1
    assert tree.trees[("x", 0)].is_leaf


def test_grow_tree_identical_stats_no_split():
    stats = ContextStats(dim=1)
    for left in ("a", "b"):
        e = stats.entry("x", 0, left, None)
        e[0] += 100.0
        e[1] += np.array([1.0]) * 100
        e[2] += np.array([1.25]) * 100
    qs = [Question(name="L-a", side="L", members=frozenset({"a"}))]
    tree = grow_tree(stats, qs, min_occupancy=1, min_gain=1e-6)
    assert tree.n_leaves == 1


def test_grow_tree_empty_stats():
    with pytest.raises(NoStats):
        grow_tree(ContextStats(dim=1), [], 1, 1)


def test_grow_tree_respects_min_occupancy():
    stats = two_group_stats(occ=5.0)
    qs = [Question(name="L-a", side="L", members=frozenset({"a"}))]
    tree = grow_tree(stats, qs, min_occupancy=6, min_gain=0.1)
    assert tree.n_leaves == 1


# --- tie_models ------------------------------------------------------------------


def ctx_corpus(seed=0, n=60):
    """Frames for center 'x' depend on the left context (a vs b)."""
    rng = np.random.default_rng(seed)
    corpus = []
    for _ in range(n):
        left = "a" if rng.random() < 0.5 else "b"
        shift = -1.5 if left == "a" else 1.5
        frames = [rng.normal(0.0 if left == "a" else 0.5, 0.3, (4, 1))]
        frames.append(rng.normal(shift, 0.3, (6, 1)))
        corpus.append(((left, "x"), seq(np.concatenate(frames))))
    return corpus


def test_tie_single_leaf_behaves_like_mono():
    corpus = ctx_corpus()
    mean, var = global_stats(corpus)
    ms = build_models(("a", "b", "x"), {"a": 3, "b": 3, "x": 3}, mean, var)
    ms, _ = baum_welch(ms, corpus, max_iter=5, rel_tol=0.0)
    stats = collect_context_stats(ms, corpus)
    tree = grow_tree(stats, [], min_occupancy=1, min_gain=float("inf"))
    tied = tie_models(ms, tree)
    tri_corpus = [(tuple(expand_labels(tr)), obs) for tr, obs in corpus]
    for (tr, obs), (tri, _) in zip(corpus, tri_corpus):
        ll_mono, _ = forward_backward(ms, tr, obs)
        ll_tied, _ = forward_backward(tied, tri, obs)
        assert abs(ll_mono - ll_tied) < 1e-9


def test_tie_shares_leaf_states():
    corpus = ctx_corpus()
    mean, var = global_stats(corpus)
    ms = build_models(("a", "b", "x"), {"a": 3, "b": 3, "x": 3}, mean, var)
    ms, _ = baum_welch(ms, corpus, max_iter=4, rel_tol=0.0)
    stats = collect_context_stats(ms, corpus)
    qs = [Question(name="L-a", side="L", members=frozenset({"a"}))]
    tree = grow_tree(stats, qs, min_occupancy=5, min_gain=1.0)
    tied = tie_models(ms, tree)
    m1 = tied.model_for("a|x|#")
    m2 = tied.model_for("b|x|#")
    # contexts falling into one leaf share the same pooled state ids
    m1b = tied.model_for("a|x|#")
    assert m1.state_ids == m1b.state_ids
    assert m1.state_ids != m2.state_ids or tree.n_leaves == len(ms.models["x"].state_ids)


def test_tied_set_round_trips():
    corpus = ctx_corpus()
    mean, var = global_stats(corpus)
    ms = build_models(("a", "b", "x"), {"a": 3, "b": 3, "x": 3}, mean, var)
    ms, _ = baum_welch(ms, corpus, max_iter=3, rel_tol=0.0)
    stats = collect_context_stats(ms, corpus)
    qs = [Question(name="L-a", side="L", members=frozenset({"a"}))]
    tree = grow_tree(stats, qs, min_occupancy=5, min_gain=1.0)
    tied = tie_models(ms, tree)
    prime_models(tied, [tr for tr, _ in corpus])
    raw = save_models(tied)
    loaded = load_models(raw)
    assert save_models(loaded) == raw
    obs = corpus[0][1]
    tri = tuple(expand_labels(corpus[0][0]))
    a, _ = forward_backward(tied, tri, obs)
    b, _ = forward_backward(loaded, tri, obs)
    assert abs(a - b) < 1e-12


def test_unseen_context_resolves():
    corpus = ctx_corpus()
    mean, var = global_stats(corpus)
    ms = build_models(("a", "b", "x"), {"a": 3, "b": 3, "x": 3}, mean, var)
    stats = collect_context_stats(ms, corpus)
    qs = [Question(name="L-a", side="L", members=frozenset({"a"}))]
    tree = grow_tree(stats, qs, min_occupancy=5, min_gain=1.0)
    tied = tie_models(ms, tree)
    # context never seen in training still resolves through the tree
    m = tied.model_for("x|x|x")
    assert m.n_states == 3
