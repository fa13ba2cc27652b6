import numpy as np
import pytest

from qhwr.cmllr import (
    CmllrTransform,
    InsufficientData,
    apply_transform,
    estimate_cmllr,
    transform_from_dict,
    transform_to_dict,
    transformed_loglik,
    writer_adaptive_train,
)
from qhwr.features import FeatureSequence
from qhwr.hmm import TrainStats, baum_welch, build_models, corpus_loglik, forward_backward


def sample_from_models(ms, transcript, rng):
    """Draw frames by walking the composite left to right."""
    frames = []
    for label in transcript:
        m = ms.models[label]
        lself, _ = m.self_adv()
        for k, gid in enumerate(m.state_ids):
            g = ms.pool[gid]
            stay_p = np.exp(lself[k])
            while True:
                comp = rng.choice(g.n_components, p=g.weights)
                frames.append(rng.normal(g.means[comp], np.sqrt(g.variances[comp])))
                if rng.random() >= stay_p:
                    break
    return FeatureSequence(frames=np.array(frames))


def trained_system(dim=2, seed=0):
    rng = np.random.default_rng(seed)
    ms = build_models(("a", "b"), {"a": 3, "b": 3}, np.zeros(dim), np.ones(dim))
    for g in ms.pool:
        g.means[:] = rng.normal(scale=2.0, size=g.means.shape)
        g.variances[:] = rng.uniform(0.3, 0.8, size=g.variances.shape)
    return ms


def model_corpus(ms, n, seed=1):
    rng = np.random.default_rng(seed)
    words = [("a", "b"), ("b", "a"), ("a",), ("b",)]
    out = []
    for i in range(n):
        w = words[i % 4]
        out.append((w, sample_from_models(ms, w, rng)))
    return out


def test_apply_identity():
    tr = CmllrTransform.identity(3)
    obs = FeatureSequence(frames=np.arange(12.0).reshape(4, 3))
    assert np.array_equal(apply_transform(tr, obs).frames, obs.frames)


def test_apply_pure_bias():
    tr = CmllrTransform(a=np.eye(2), b=np.array([1.0, -2.0]))
    obs = FeatureSequence(frames=np.zeros((3, 2)))
    assert np.allclose(apply_transform(tr, obs).frames, [[1, -2]] * 3)


def test_apply_affine_combination_rule():
    rng = np.random.default_rng(0)
    tr = CmllrTransform(a=rng.normal(size=(2, 2)) + 2 * np.eye(2), b=rng.normal(size=2))
    u = FeatureSequence(frames=rng.normal(size=(5, 2)))
    v = FeatureSequence(frames=rng.normal(size=(5, 2)))
    al, be = 0.7, 0.9
    lhs = apply_transform(tr, FeatureSequence(frames=al * u.frames + be * v.frames)).frames
    rhs = al * apply_transform(tr, u).frames + be * apply_transform(tr, v).frames - (al + be - 1) * tr.b
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_bias_recovery():
    ms = trained_system()
    corpus = model_corpus(ms, 60)
    c = np.array([1.5, -0.8])
    shifted = [(t, FeatureSequence(frames=o.frames + c)) for t, o in corpus]
    tr = estimate_cmllr(ms, shifted, iters=20)
    # the transform must map shifted data back onto the model: A ~ I, b ~ -c
    assert np.allclose(tr.a, np.eye(2), atol=0.05)
    assert np.allclose(tr.b, -c, atol=0.05 * np.abs(c).max())
    back = [(t, apply_transform(tr, o)) for t, o in shifted]
    assert corpus_loglik(ms, back) > corpus_loglik(ms, shifted)


def test_matched_data_gives_identity():
    ms = trained_system(seed=3)
    corpus = model_corpus(ms, 30, seed=5)
    tr = estimate_cmllr(ms, corpus, iters=20)
    assert np.allclose(tr.a, np.eye(2), atol=0.12)
    assert np.allclose(tr.b, 0.0, atol=0.12)


def test_adapted_loglik_not_worse():
    ms = trained_system(seed=7)
    corpus = model_corpus(ms, 20, seed=9)
    skew = [(t, FeatureSequence(frames=o.frames @ np.array([[1.2, 0.1], [0.0, 0.9]]).T + 0.5)) for t, o in corpus]
    tr = estimate_cmllr(ms, skew, iters=20)
    ident = CmllrTransform.identity(2)
    assert transformed_loglik(ms, skew, tr) >= transformed_loglik(ms, skew, ident) - 1e-9


def test_fixed_point_reestimation():
    ms = trained_system(seed=11)
    corpus = model_corpus(ms, 30, seed=13)
    shifted = [(t, FeatureSequence(frames=o.frames * 1.3 + 0.7)) for t, o in corpus]
    tr = estimate_cmllr(ms, shifted, iters=20)
    adapted = [(t, apply_transform(tr, o)) for t, o in shifted]
    tr2 = estimate_cmllr(ms, adapted, iters=20)
    assert np.allclose(tr2.a, np.eye(2), atol=1e-2 * 4)
    assert np.allclose(tr2.b, 0.0, atol=1e-2 * 4)


def test_jacobian_term_matches_direct_density():
    # 1 state, known Gaussian: density of x under (A, b) pullback is
    # N(Ax + b; mu, var) * |det A|
    ms = build_models(("a",), {"a": 3}, np.zeros(1), np.ones(1))
    from qhwr.hmm import GraphemeModel, _left_right_matrix

    ms.models["a"] = GraphemeModel(label="a", state_ids=(0,), transitions=_left_right_matrix(1, 0.6))
    tr = CmllrTransform(a=np.array([[2.0]]), b=np.array([0.3]))
    x = np.array([[0.4]])
    obs = FeatureSequence(frames=x)
    got = transformed_loglik(ms, [(("a",), obs)], tr)
    import math

    y = 2.0 * 0.4 + 0.3
    direct = -0.5 * (math.log(2 * math.pi) + y * y) + math.log(0.4) + math.log(2.0)
    assert abs(got - direct) < 1e-9


def test_insufficient_data():
    ms = trained_system()
    tiny = model_corpus(ms, 1)[:1]
    tiny = [(tiny[0][0], FeatureSequence(frames=tiny[0][1].frames[:4]))]
    with pytest.raises(InsufficientData):
        estimate_cmllr(ms, tiny)


def test_wat_reduces_state_variance():
    ms = trained_system(seed=17)
    base = model_corpus(ms, 40, seed=19)
    bias = np.array([1.2, -1.2])
    by_writer = {
        "w0": [(t, FeatureSequence(frames=o.frames + bias)) for t, o in base[:20]],
        "w1": [(t, FeatureSequence(frames=o.frames - bias)) for t, o in base[20:]],
    }
    pooled = [s for w in sorted(by_writer) for s in by_writer[w]]
    mixed, _ = baum_welch(ms, pooled, max_iter=6, rel_tol=0.0)
    wat, transforms = writer_adaptive_train(ms, by_writer, rounds=2, bw_iters=6)
    var_mixed = np.mean([g.variances.mean() for g in mixed.pool])
    var_wat = np.mean([g.variances.mean() for g in wat.pool])
    assert var_wat < var_mixed
    assert set(transforms) == {"w0", "w1"}


def test_wat_single_writer_close_to_plain_retrain():
    ms = trained_system(seed=23)
    corpus = model_corpus(ms, 30, seed=29)
    wat, transforms = writer_adaptive_train(ms, {"w0": corpus}, rounds=1, bw_iters=4)
    plain, _ = baum_welch(ms, corpus, max_iter=4, rel_tol=0.0)
    # matched data: the transform is near identity, so WAT ~ plain retrain
    ll_wat = corpus_loglik(wat, corpus)
    ll_plain = corpus_loglik(plain, corpus)
    assert abs(ll_wat - ll_plain) < 0.02 * abs(ll_plain)


def test_transform_file_round_trip():
    tr = CmllrTransform(a=np.array([[1.5, 0.1], [0.0, 0.8]]), b=np.array([0.2, -0.3]), writer_id="w7")
    again = transform_from_dict(transform_to_dict(tr))
    assert np.array_equal(tr.a, again.a) and np.array_equal(tr.b, again.b)
    assert again.writer_id == "w7"
