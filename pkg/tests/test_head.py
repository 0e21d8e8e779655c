import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otter import numerics as nm
from otter.head import (
    DistanceWeights,
    LossWeights,
    PrototypePair,
    attention_prototype,
    build_prototype,
    classify,
    combined_distances,
    cross_entropy,
    proto_distance,
    query_specific_prototype,
    separation_loss,
    total_loss,
)

from .helpers import assert_grads_match


@pytest.fixture(autouse=True)
def f64():
    with nm.precision(np.float64):
        yield


def test_loss_weights_normalised_defaults():
    w = LossWeights.normalized(0.8, 0.1, 0.1)
    assert (w.ce, w.sep_temporal, w.sep_regular) == pytest.approx((0.8, 0.1, 0.1))
    w = LossWeights.normalized(8, 1, 1)
    assert w.ce == pytest.approx(0.8)
    with pytest.raises(ValueError):
        LossWeights(0.5, 0.5, 0.5)
    with pytest.raises(ValueError):
        LossWeights.normalized(0, 0, 0)
    with pytest.raises(ValueError):
        DistanceWeights(0.7, 0.7)


def test_prototype_is_mean_and_rejects_empty():
    rng = np.random.default_rng(0)
    s = rng.normal(size=(3, 4, 5))
    np.testing.assert_allclose(build_prototype(s).data, s.mean(0))
    np.testing.assert_allclose(build_prototype([s[0]]).data, s[0])
    with pytest.raises(ValueError):
        build_prototype([])


def test_distance_modes():
    a = np.zeros((2, 3))
    b = np.array([[3.0, 4.0, 0.0], [0.0, 0.0, 12.0]])
    assert float(proto_distance(a, b).data) == pytest.approx(13.0)
    assert float(proto_distance(a, b, "frame_sum").data) == pytest.approx(17.0)
    with pytest.raises(ValueError):
        proto_distance(a, b, "cosine")
    with pytest.raises(nm.ShapeError):
        proto_distance(np.zeros((2, 3)), np.zeros((3, 3)))


def test_combined_distance_oracle():
    rng = np.random.default_rng(1)
    qt, qr = rng.normal(size=(4, 3, 5)), rng.normal(size=(4, 3, 5))
    p1, p2 = rng.normal(size=(2, 3, 5)), rng.normal(size=(2, 3, 5))
    d = combined_distances(qt, qr, (nm.Tensor(p1), nm.Tensor(p2)), DistanceWeights(0.3, 0.7)).data
    for q in range(4):
        for c in range(2):
            ref = 0.3 * np.linalg.norm(qt[q] - p1[c]) + 0.7 * np.linalg.norm(qr[q] - p2[c])
            assert d[q, c] == pytest.approx(ref, rel=1e-12)
    pairs = [PrototypePair(nm.Tensor(p1[c]), nm.Tensor(p2[c])) for c in range(2)]
    np.testing.assert_allclose(combined_distances(qt, qr, pairs, DistanceWeights(0.3, 0.7)).data, d)


def test_omega_endpoint_ignores_regular_term():
    rng = np.random.default_rng(2)
    qt, qr = rng.normal(size=(6, 3, 4)), rng.normal(size=(6, 3, 4))
    p1, p2 = nm.Tensor(rng.normal(size=(3, 3, 4))), nm.Tensor(rng.normal(size=(3, 3, 4)))
    pred, _ = classify(qt, qr, (p1, p2), DistanceWeights(1.0, 0.0))
    pred2, _ = classify(qt, rng.normal(size=(6, 3, 4)), (p1, nm.Tensor(rng.normal(size=(3, 3, 4)))), DistanceWeights(1.0, 0.0))
    np.testing.assert_array_equal(pred, pred2)


def test_cross_entropy_oracle():
    d = np.array([[1.0, 2.0, 3.0], [0.5, 0.1, 2.0]])
    labels = np.array([0, 2])
    logits = -d / 2.0
    ref = -np.mean([logits[i, l] - np.log(np.exp(logits[i]).sum()) for i, l in enumerate(labels)])
    assert float(cross_entropy(d, labels, temperature=2.0).data) == pytest.approx(ref, rel=1e-12)
    with pytest.raises(ValueError):
        cross_entropy(d, np.array([0, 3]))
    with pytest.raises(nm.ShapeError):
        cross_entropy(d, np.array([0]))


def test_separation_loss_oracle():
    rng = np.random.default_rng(3)
    p = rng.normal(size=(4, 3, 2))
    flat = p.reshape(4, -1)
    unit = flat / np.linalg.norm(flat, axis=1, keepdims=True)
    cos = unit @ unit.T
    assert float(separation_loss(p).data) == pytest.approx(cos[np.triu_indices(4, 1)].sum(), rel=1e-12)
    with pytest.raises(ValueError):
        separation_loss(np.zeros((2, 3, 2)))
    with pytest.raises(ValueError):
        separation_loss(p[:1])


def test_total_loss_weight_endpoint():
    rng = np.random.default_rng(4)
    d = rng.uniform(size=(5, 5))
    labels = np.arange(5)
    pt, pr = rng.normal(size=(5, 3, 4)), rng.normal(size=(5, 3, 4))
    total, parts = total_loss(d, labels, pt, pr, LossWeights(1.0, 0.0, 0.0))
    assert float(total.data) == float(cross_entropy(d, labels).data)
    assert set(parts) == {"ce"}
    total, parts = total_loss(d, labels, pt, pr)
    ref = 0.8 * parts["ce"] + 0.1 * parts["sep_temporal"] + 0.1 * parts["sep_regular"]
    assert float(total.data) == pytest.approx(ref, rel=1e-12)


def test_head_gradients():
    rng = np.random.default_rng(5)
    st_ = nm.parameter(rng.normal(size=(3, 2, 4, 5)))
    sr = nm.parameter(rng.normal(size=(3, 2, 4, 5)))
    qt = nm.parameter(rng.normal(size=(3, 4, 5)))
    qr = nm.parameter(rng.normal(size=(3, 4, 5)))
    labels = np.array([2, 0, 1])

    def f():
        pt = nm.stack([build_prototype(st_[c]) for c in range(3)], 0)
        pr = nm.stack([build_prototype(sr[c]) for c in range(3)], 0)
        d = combined_distances(qt, qr, (pt, pr))
        return total_loss(d, labels, pt, pr, temperature=2.0)[0]

    assert_grads_match(f, [st_, sr, qt, qr], rtol=1e-6, atol=1e-8)


def test_prototype_variants_single_shot_reduce_to_support():
    rng = np.random.default_rng(6)
    s = rng.normal(size=(1, 3, 4))
    np.testing.assert_allclose(attention_prototype(s).data, s[0], atol=1e-14)
    np.testing.assert_allclose(query_specific_prototype(s, rng.normal(size=(3, 4))).data, s[0], atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(1, 4), st.integers(0, 2**31))
def test_identical_prototype_query_is_nearest(N, F, seed):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=(N, F, 3))
    target = int(rng.integers(N))
    pred, _ = classify(p[target][None], p[target][None], (nm.Tensor(p), nm.Tensor(p)))
    assert pred[0] == target
