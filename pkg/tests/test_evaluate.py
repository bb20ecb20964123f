import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csidistill.errors import DataError, NumericError
from csidistill.evaluate import (
    EvalReport, confusion_matrix, evaluate, fuse_probabilities, predict_fused, softmax,
)
from csidistill.model import checkpoint_hash, init_params
from csidistill.preprocess import CsiRatioFeature
from csidistill.traces import DatasetSplit


def test_softmax_examples():
    p = softmax([math.log(1), math.log(2), math.log(3)])
    np.testing.assert_allclose(p, [1 / 6, 2 / 6, 3 / 6], atol=1e-15)
    np.testing.assert_allclose(softmax(np.zeros(6)), np.full(6, 1 / 6), atol=1e-15)
    assert softmax([1000.0, 0.0])[0] == 1.0
    with pytest.raises(NumericError):
        softmax([np.nan, 0.0])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3))
def test_softmax_shift_invariant(seed, a):
    z = np.random.default_rng(seed).standard_normal(6) * 10
    np.testing.assert_allclose(softmax(z + a), softmax(z), atol=1e-12, rtol=0)


def test_fusion_example():
    pred, fused = fuse_probabilities([[0.6, 0.4], [0.2, 0.8]])
    np.testing.assert_allclose(fused, [0.4, 0.6], atol=1e-15)
    assert pred == 1


def test_fusion_tie_goes_to_lowest_id():
    pred, _ = fuse_probabilities([[0.1, 0.45, 0.45], [0.1, 0.45, 0.45]])
    assert pred == 1
    assert fuse_probabilities([[0.5, 0.5]])[0] == 0


def test_fusion_rejects_empty():
    with pytest.raises(DataError):
        fuse_probabilities(np.zeros((0, 6)))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_fusion_order_invariant_and_on_simplex(seed, A):
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(6), size=A)
    pred, fused = fuse_probabilities(probs)
    pred2, fused2 = fuse_probabilities(probs[rng.permutation(A)])
    assert pred == pred2
    assert np.array_equal(fused, fused2)
    assert abs(fused.sum() - 1.0) < 1e-12
    assert np.all(fused >= 0)


def make_features(n, seed=0, T=30, S=3):
    rng = np.random.default_rng(seed)
    return {i: [CsiRatioFeature(rng.standard_normal((T, S)), a, i % 6)
                for a in (1, 2)] for i in range(n)}


def test_predict_fused_uses_every_antenna():
    st_ = init_params(0, 3, 8, 6)
    feats = make_features(1)[0]
    pred, fused = predict_fused(st_, feats)
    pred_r, fused_r = predict_fused(st_, feats[::-1])
    assert pred == pred_r and np.array_equal(fused, fused_r)
    with pytest.raises(DataError):
        predict_fused(st_, [])


def test_confusion_and_accuracy_hand_built():
    cm = confusion_matrix([0, 0, 1, 2], [0, 0, 1, 1], num_classes=6)
    rep = EvalReport("in-domain", cm, "abc")
    assert rep.accuracy == 0.75
    assert rep.n == 4
    assert cm[2, 1] == 1 and np.trace(cm) == 3
    per = rep.per_class_accuracy
    assert per[:3] == [1.0, 1.0, 0.0]
    assert per[3:] == [None, None, None]


def test_perfect_and_constant_predictors():
    y = np.repeat(np.arange(6), 5)
    assert EvalReport("x", confusion_matrix(y, y)).accuracy == 1.0
    assert np.array_equal(confusion_matrix(y, y), np.diag(np.full(6, 5)))
    rep = EvalReport("x", confusion_matrix(y, np.zeros_like(y)))
    assert abs(rep.accuracy - 1 / 6) < 1e-15


def test_report_serialization():
    rep = EvalReport("cross-location", confusion_matrix([0, 1], [0, 0]), "h")
    d = json.loads(rep.to_json())
    assert set(d) == {"scenario", "accuracy", "n", "per_class_accuracy", "confusion",
                      "config_hash"}
    assert len(d["per_class_accuracy"]) == 6 and len(d["confusion"]) == 6
    lines = rep.confusion_csv().splitlines()
    assert lines[0] == "PushPull,Sweep,Clap,Slide,DrawO,DrawZigZag"
    assert len(lines) == 7 and lines[1] == "1,0,0,0,0,0"


def test_evaluate_does_not_mutate_and_is_order_free():
    st_ = init_params(3, 3, 8, 6)
    feats = make_features(12, seed=1)
    before = checkpoint_hash(st_)
    split = DatasetSplit("in-domain", (), tuple(range(12)))
    rep = evaluate(st_, split, feats, "csi_ratio")
    assert checkpoint_hash(st_) == before
    shuffled = DatasetSplit("in-domain", (), tuple(np.random.default_rng(0).permutation(12)))
    rep2 = evaluate(st_, shuffled, dict(reversed(list(feats.items()))), "csi_ratio")
    assert np.array_equal(rep.confusion, rep2.confusion)
    assert rep.n == 12


def test_evaluate_missing_features():
    st_ = init_params(3, 3, 8, 6)
    with pytest.raises(DataError):
        evaluate(st_, DatasetSplit("in-domain", (), (0, 99)), make_features(2), "csi_ratio")
