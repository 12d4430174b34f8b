import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from degreelevel import PipelineConfig, generate_synthetic, NoiseConfig
from degreelevel.errors import GradeMismatch, LengthMismatch, TooFewSamples
from degreelevel.eval import evaluate, kfold_cv, stratified_folds, subset_accuracy, write_comparison_csv
from degreelevel.neural import ModelConfig, TrainConfig
from degreelevel.taxonomy import LabelSet


def L(*ids, grade=4):
    return LabelSet(frozenset(ids), grade)


C, A, B, M, D = range(5)

# hand-computed fixture, grade 4
GOLD = [L(A), L(B), L(M, D), L(M, D), L(C)]
PRED = [L(A), L(A), L(M), L(M, D), L(C, B)]


def test_subset_accuracy_examples():
    assert subset_accuracy(GOLD, GOLD) == 1.0
    assert subset_accuracy([L(M)], [L(M, D)]) == 0.0
    assert subset_accuracy([L(A), L(B), L(C), L(D)], [L(A), L(B), L(C), L(M)]) == 0.75
    with pytest.raises(LengthMismatch):
        subset_accuracy([L(A)], [])
    with pytest.raises(GradeMismatch):
        subset_accuracy([L(A, grade=1)], [L(A)])


def test_hand_fixture(tx):
    r = evaluate(PRED, GOLD, 4, tx)
    assert r.subset_accuracy == pytest.approx(0.4)
    assert r.projected_accuracy == pytest.approx(0.4)
    expect = {"Certificate": (1.0, 1.0, 1), "Associate": (0.5, 1.0, 1), "Bachelor": (0.0, 0.0, 1),
              "Master": (1.0, 1.0, 2), "Doctorate": (1.0, 0.5, 2)}
    for name, (p, rcl, sup) in expect.items():
        s = r.per_category[name]
        assert (s.precision, s.recall, s.accuracy, s.support) == (p, rcl, rcl, sup), name
    assert r.confusion.tolist() == [[0, 0, 1, 0, 0],
                                    [0, 1, 0, 0, 0],
                                    [0, 1, 0, 0, 0],
                                    [0, 0, 0, 0, 0],
                                    [0, 0, 0, 1, 1]]


def test_perfect_and_degenerate(tx):
    r = evaluate(GOLD, GOLD, 4, tx)
    assert np.count_nonzero(r.confusion - np.diag(np.diag(r.confusion))) == 0
    r = evaluate([L(B)] * 5, GOLD, 4, tx)
    assert r.per_category["Bachelor"].recall == 1.0
    assert all(r.per_category[n].recall == 0.0 for n in ("Certificate", "Associate", "Master", "Doctorate"))


@given(st.lists(st.tuples(st.sets(st.integers(0, 4), min_size=1), st.sets(st.integers(0, 4), min_size=1)),
                min_size=1, max_size=30))
def test_report_invariants(tx, pairs):
    preds = [L(*p) for p, _ in pairs]
    golds = [L(*g) for _, g in pairs]
    r = evaluate(preds, golds, 4, tx)
    assert r.confusion.sum() == len(pairs)
    rows = r.confusion.sum(axis=1)
    for c in range(5):
        assert rows[c] == sum(tx.highest_level(g) == c for g in golds)
    for s in r.per_category.values():
        assert 0 <= s.precision <= 1 and 0 <= s.recall <= 1
    assert subset_accuracy(preds, preds) == 1.0


def test_report_serialization(tx, tmp_path):
    r = evaluate(PRED, GOLD, 4, tx, scenario="x")
    d = json.loads(r.to_json())
    assert d["version"] == 1 and d["grade"] == 4 and d["confusion"] == r.confusion.tolist()
    r.write_confusion_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0].split(",")[1:] == list(tx.category_names(4))
    assert lines[5] == "Doctorate,0,0,0,1,1"
    write_comparison_csv([r, r], tmp_path / "cmp.csv")
    assert (tmp_path / "cmp.csv").read_text().count("\n") == 3


@settings(max_examples=40)
@given(st.lists(st.integers(0, 4), min_size=10, max_size=120), st.integers(2, 10), st.integers(0, 99))
def test_folds_partition_and_stratify(strata, k, seed):
    folds = stratified_folds(strata, k, seed)
    allidx = np.concatenate(folds)
    assert sorted(allidx.tolist()) == list(range(len(strata)))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    strata = np.asarray(strata)
    for s in np.unique(strata):
        share = (strata == s).sum() / k
        for f in folds:
            assert abs((strata[f] == s).sum() - share) < 1 + 1e-9
    assert all(np.array_equal(a, b) for a, b in zip(folds, stratified_folds(strata.tolist(), k, seed)))


def test_too_few_samples(db, tx):
    recs = generate_synthetic(db, 1, NoiseConfig(), tx)
    with pytest.raises(TooFewSamples):
        kfold_cv(recs, k=2)
    with pytest.raises(TooFewSamples):
        stratified_folds([0, 1, 2], 1, 0)


def tiny_pipeline(**kw):
    model = ModelConfig(dim=8, conv_filters=8, lstm_hidden=6, text_dense=8, feat_dense=4, fusion_dense=8,
                        buckets=512)
    return PipelineConfig(model=model, train=TrainConfig(epochs=2, batch_size=16), **kw)


def test_small_cv_deterministic(db, tx, res):
    recs = generate_synthetic(db, 150, NoiseConfig(rng_seed=5), tx)
    a = kfold_cv(recs, k=3, config=tiny_pipeline(grade=4), seed=1, resources=res)
    b = kfold_cv(recs, k=3, config=tiny_pipeline(grade=4), seed=1, resources=res)
    assert a.to_json() == b.to_json()
    assert len(a.fold_results) == 3 and a.n_samples == 150
    assert a.subset_accuracy == pytest.approx(np.mean(a.fold_results))
    assert a.scenario == "expansion+spell+subword+features"
