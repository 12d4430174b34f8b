import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from degreelevel.embed import embed_sequence
from degreelevel.errors import EmptyDataset, EmptySequence, GradeMismatch, InvalidConfig
from degreelevel.neural import (MULTICLASS, Example, FeatureStats, FeatureVector, ModelConfig, TrainConfig,
                                decide, forward, gradient_check, init_model, loss_and_grads, predict,
                                predict_probabilities, train)
from degreelevel.taxonomy import LabelSet

from tiny import tiny_model


def small_config(**kw):
    base = dict(grade=4, dim=8, max_len=6, conv_filters=6, lstm_hidden=5, text_dense=6, feat_dense=3,
                fusion_dense=6, buckets=64, seed=0)
    base.update(kw)
    return ModelConfig(**base)


def toy_dataset(n=50, seed=0):
    """Tokens chosen so the grade-4 label is learnable from the text."""
    rng = np.random.default_rng(seed)
    kinds = [("ASSOCIATE", 1), ("BACHELOR", 2), ("MASTER", 3), ("DOCTOR", 4)]
    out = []
    for _ in range(n):
        word, label = kinds[int(rng.integers(4))]
        toks = (word, "OF", ["ARTS", "SCIENCE"][int(rng.integers(2))])
        out.append(Example(toks, FeatureVector(float(rng.uniform(1, 5)), None),
                           LabelSet(frozenset({label}), 4)))
    return out


def test_init_deterministic_and_seeded():
    a = init_model(small_config(seed=1), ["X"])
    b = init_model(small_config(seed=1), ["X"])
    c = init_model(small_config(seed=2), ["X"])
    for k in a.weights:
        np.testing.assert_array_equal(a.weights[k], b.weights[k])
        assert a.weights[k].tobytes() == b.weights[k].tobytes()
    np.testing.assert_array_equal(a.table.word_vectors, b.table.word_vectors)
    assert any(not np.array_equal(a.weights[k], c.weights[k]) for k in a.weights)
    assert all(not a.weights[k].any() for k in a.weights if k.endswith(".b"))


@pytest.mark.parametrize("bad", [dict(conv_filters=0), dict(threshold=1.0), dict(dim=0), dict(grade=5),
                                 dict(pool_size=0), dict(mode="ranking")])
def test_invalid_config(bad):
    with pytest.raises(InvalidConfig):
        init_model(small_config(**bad))


def test_output_size_matches_grade():
    for grade, k in [(1, 13), (2, 8), (3, 6), (4, 5)]:
        m = init_model(small_config(grade=grade), ["A"])
        assert m.weights["out.W"].shape[1] == k == m.config.n_categories


def test_forward_range_and_empty():
    m = init_model(small_config(), ["BACHELOR"])
    seq = embed_sequence(m.table, ["BACHELOR", "OF", "ARTS"], m.config.max_len)
    p = forward(m, seq, FeatureVector(4.0, 8.0))
    assert p.shape == (5,) and np.all((p > 0) & (p < 1))
    with pytest.raises(EmptySequence):
        forward(m, embed_sequence(m.table, [], m.config.max_len), FeatureVector())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_mask_invariance(seed, n_tokens):
    m, _ = tiny_model(seed, max_len=6)
    rng = np.random.default_rng(seed)
    seq = embed_sequence(m.table, ["BACHELOR", "NURSNG", "OF", "SCIENCE", "Q", "ARTS"][:n_tokens], 6)
    f = FeatureVector(2.0, None)
    p0 = forward(m, seq, f)
    for _ in range(3):
        seq.values[~seq.mask] = rng.normal(0, 10, size=seq.values[~seq.mask].shape)
        assert np.array_equal(forward(m, seq, f), p0)


def test_features_ignored_when_disabled():
    m = init_model(small_config(use_features=False), ["A"])
    seq = embed_sequence(m.table, ["A"], m.config.max_len)
    assert np.array_equal(forward(m, seq, FeatureVector(1.0, 2.0)), forward(m, seq, FeatureVector(9.0, None)))


def test_decide_examples():
    cfg = small_config()
    assert decide(np.array([0.9, 0.7, 0.1, 0.2, 0.3]), cfg).members == {0, 1}
    assert decide(np.array([0.1, 0.2, 0.1, 0.2, 0.4]), cfg).members == {4}
    mc = small_config(mode=MULTICLASS)
    assert decide(np.array([0.6, 0.7, 0, 0, 0]), mc).members == {1}


@given(st.lists(st.floats(0, 1), min_size=5, max_size=5))
def test_decide_never_empty(p):
    assert len(decide(np.array(p), small_config())) >= 1


def test_predict_returns_probabilities():
    m = init_model(small_config(), ["A"])
    pred = predict(m, embed_sequence(m.table, ["A"], 6), FeatureVector())
    assert len(pred.labels) >= 1 and pred.probabilities.shape == (5,)


def test_multiclass_softmax():
    m = init_model(small_config(mode=MULTICLASS), ["A"])
    p = predict_probabilities(m, [["A", "B"], ["C"]], [FeatureVector(), FeatureVector(1.0, 2.0)])
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    with pytest.raises(InvalidConfig):
        loss_and_grads(m, [Example(("A",), FeatureVector(), LabelSet(frozenset({1, 2}), 4))])


def test_training_loss_decreases():
    m = init_model(small_config(), [])
    _, hist = train(m, toy_dataset(50), TrainConfig(epochs=20, batch_size=8, lr=1e-2))
    assert len(hist) == 20
    assert hist[-1].loss < hist[0].loss


def test_overfit_one_sample():
    ex = Example(("MASTER", "BUSINESS"), FeatureVector(2.0, 4.0), LabelSet(frozenset({3, 4}), 4))
    m = init_model(small_config(), ["MASTER"])
    _, hist = train(m, [ex] * 8, TrainConfig(epochs=60, batch_size=8, lr=1e-2))
    assert hist[-1].subset_accuracy == 1.0


def test_training_deterministic():
    runs = []
    for _ in range(2):
        m = init_model(small_config(seed=5), ["ARTS"])
        _, hist = train(m, toy_dataset(30, seed=2), TrainConfig(epochs=3, batch_size=4, seed=9))
        runs.append((m, hist))
    (a, ha), (b, hb) = runs
    assert ha == hb
    for k in a.weights:
        assert a.weights[k].tobytes() == b.weights[k].tobytes()
    assert a.table.ngram_vectors.tobytes() == b.table.ngram_vectors.tobytes()


def test_train_errors():
    m = init_model(small_config(), [])
    with pytest.raises(EmptyDataset):
        train(m, [])
    grade1 = Example(("A",), FeatureVector(), LabelSet(frozenset({0}), 1))
    with pytest.raises(GradeMismatch):
        train(m, [grade1])
    with pytest.raises(EmptySequence):
        train(m, [Example((), FeatureVector(), LabelSet(frozenset({0}), 4))])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_check_tiny(seed):
    m, ex = tiny_model(seed)
    assert gradient_check(m, ex, epsilon=1e-5) < 1e-4


def test_gradient_check_multiclass_batch():
    m, ex = tiny_model(7, mode=MULTICLASS)
    m2, ex2 = tiny_model(8, mode=MULTICLASS, grade=m.config.grade)
    assert gradient_check(m, [ex, Example(ex2.tokens, ex2.features, ex.labels)]) < 1e-4


def test_gradient_check_rejects_zero_epsilon():
    m, ex = tiny_model(0)
    with pytest.raises(ValueError):
        gradient_check(m, ex, epsilon=0)


def test_zero_loss_point_has_zero_gradient():
    m, _ = tiny_model(3, grade=4)
    m.weights["out.W"][:] = 0.0
    m.weights["out.b"][:] = [40.0, -40.0, -40.0, 40.0, -40.0]
    ex = Example(("BACHELOR",), FeatureVector(1.0, 2.0), LabelSet(frozenset({0, 3}), 4))
    loss, grads = loss_and_grads(m, [ex])
    assert loss < 1e-15
    for name, g in grads.items():
        arr = g[1] if name.startswith("emb.") else g
        assert np.max(np.abs(arr), initial=0.0) < 1e-8, name


def test_feature_vector_validation():
    with pytest.raises(ValueError):
        FeatureVector(-1.0, 2.0)
    with pytest.raises(ValueError):
        FeatureVector(float("nan"), None)


def test_feature_stats():
    feats = [FeatureVector(2.0, 4.0), FeatureVector(4.0, None), FeatureVector(None, 8.0)]
    st_ = FeatureStats.fit(feats)
    np.testing.assert_allclose(st_.mean, [3.0, 6.0])
    assert np.all(st_.std > 0)
    z = st_.standardize(FeatureVector(None, 6.0))
    np.testing.assert_array_equal(z, [0.0, 0.0, 1.0, 0.0])
    constant = FeatureStats.fit([FeatureVector(1.0, 1.0)] * 3)
    assert np.all(constant.std > 0)


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=2))
def test_standardize_round_trip(z):
    s = FeatureStats(np.array([3.0, 7.5]), np.array([1.25, 2.5]))
    z = np.array(z)
    back = s.standardize(FeatureVector(*np.maximum(s.destandardize(z), 0.0)))
    mask = s.destandardize(z) >= 0
    np.testing.assert_allclose(back[:2][mask], z[mask], rtol=0, atol=1e-12)
