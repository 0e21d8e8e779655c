import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otter import numerics as nm
from otter.oracles import random_wkv_instance
from otter.wkv import (
    format_bench,
    wkv_bench,
    wkv_bidirectional,
    wkv_bidirectional_oracle,
    wkv_causal,
    wkv_causal_oracle,
)

from .helpers import assert_grads_match

KERNELS = [(wkv_causal, wkv_causal_oracle), (wkv_bidirectional, wkv_bidirectional_oracle)]


@pytest.fixture(autouse=True)
def f64():
    with nm.precision(np.float64):
        yield


def test_causal_running_mean_example():
    z = np.zeros(1)
    v = np.array([[1.0], [2.0], [3.0]])
    np.testing.assert_allclose(wkv_causal_oracle(np.zeros((3, 1)), v, z, z)[:, 0], [1.0, 1.5, 2.0], rtol=1e-15)
    np.testing.assert_allclose(wkv_causal(np.zeros((3, 1)), v, z, z).data[:, 0], [1.0, 1.5, 2.0], rtol=1e-15)


def test_bidirectional_uniform_weights_give_mean():
    rng = np.random.default_rng(0)
    v = rng.normal(size=(7, 3))
    z = np.zeros(3)
    out = wkv_bidirectional(np.zeros((7, 3)), v, z, z).data
    np.testing.assert_allclose(out, np.broadcast_to(v.mean(0), v.shape), rtol=1e-12)


@pytest.mark.parametrize("fast,slow", KERNELS)
def test_matches_oracle_on_random_instances(fast, slow):
    rng = np.random.default_rng(1)
    for _ in range(100):
        k, v, w, u = random_wkv_instance(rng)
        np.testing.assert_allclose(fast(k, v, w, u).data, slow(k, v, w, u), rtol=1e-5, atol=1e-12)


@pytest.mark.parametrize("fast,slow", KERNELS)
def test_batched_equals_per_sequence(fast, slow):
    rng = np.random.default_rng(2)
    k, v = rng.normal(size=(3, 9, 4)), rng.normal(size=(3, 9, 4))
    w, u = rng.uniform(0, 1, 4), rng.normal(size=4)
    batched = fast(k, v, w, u).data
    for b in range(3):
        np.testing.assert_allclose(batched[b], slow(k[b], v[b], w, u), rtol=1e-10)


@pytest.mark.parametrize("fast,_", KERNELS)
def test_single_token_is_identity(fast, _):
    rng = np.random.default_rng(3)
    v = rng.normal(size=(1, 5))
    out = fast(rng.normal(size=(1, 5)) * 10, v, rng.normal(size=5), rng.normal(size=5)).data
    assert np.array_equal(out, v)


@pytest.mark.parametrize("fast,_", KERNELS)
def test_extreme_keys_stay_in_value_hull(fast, _):
    rng = np.random.default_rng(4)
    k = rng.choice([-40.0, 40.0], size=(20, 3))
    v = rng.normal(size=(20, 3))
    out = fast(k, v, rng.normal(size=3), rng.normal(size=3)).data
    assert np.isfinite(out).all()
    assert (out >= v.min(0) - 1e-12).all() and (out <= v.max(0) + 1e-12).all()


def test_huge_keys_use_log_domain_path():
    """Key spread far beyond the rescaling range still gives the oracle answer."""
    k = np.array([[-700.0], [0.0], [700.0]])
    v = np.array([[1.0], [2.0], [3.0]])
    w, u = np.array([0.5]), np.array([0.0])
    out = wkv_causal(k, v, w, u).data
    np.testing.assert_allclose(out[:, 0], [1.0, 2.0, 3.0], rtol=1e-12)


def test_oracle_overflow_names_position():
    k = np.array([[0.0], [800.0]])
    with pytest.raises(nm.NumericsError, match="t=1"):
        wkv_causal_oracle(k, np.ones((2, 1)), np.zeros(1), np.zeros(1))


def test_causality():
    rng = np.random.default_rng(5)
    k, v, w, u = rng.normal(size=(10, 3)), rng.normal(size=(10, 3)), rng.normal(size=3), rng.normal(size=3)
    base = wkv_causal(k, v, w, u).data
    k2, v2 = k.copy(), v.copy()
    k2[6:] += 3.0
    v2[6:] -= 5.0
    assert np.array_equal(wkv_causal(k2, v2, w, u).data[:6], base[:6])


def test_bidirectional_reversal_equivariance():
    rng = np.random.default_rng(6)
    k, v, w, u = rng.normal(size=(12, 4)), rng.normal(size=(12, 4)), rng.normal(size=4), rng.normal(size=4)
    a = wkv_bidirectional(k, v, w, u).data[::-1]
    b = wkv_bidirectional(k[::-1], v[::-1], w, u).data
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


def test_shape_errors():
    with pytest.raises(nm.ShapeError):
        wkv_causal(np.zeros((3, 2)), np.zeros((3, 3)), np.zeros(2), np.zeros(2))
    with pytest.raises(nm.ShapeError):
        wkv_causal(np.zeros((3, 2)), np.zeros((3, 2)), np.zeros(3), np.zeros(2))


@pytest.mark.parametrize("fast,_", KERNELS)
@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_gradients_match_finite_differences(fast, _, sign):
    """Both kernel paths: nonnegative decays take the rescaled scan, negative ones the log-domain scan."""
    rng = np.random.default_rng(7)
    k = nm.parameter(rng.normal(size=(2, 6, 3)))
    v = nm.parameter(rng.normal(size=(2, 6, 3)))
    w = nm.parameter(sign * rng.uniform(0.1, 1.0, 3))
    u = nm.parameter(rng.normal(size=3))
    g = rng.normal(size=(2, 6, 3))
    assert_grads_match(lambda: nm.sum_(fast(k, v, w, u) * g), [k, v, w, u], rtol=1e-6, atol=1e-8)


def test_bench_table_shape():
    rows = wkv_bench([1, 4, 8], channels=2, repeats=1)
    assert [r["T"] for r in rows] == [1, 4, 8]
    text = format_bench(rows)
    assert text.splitlines()[0].split("\t")[:3] == ["T", "stream_ms", "oracle_ms"]
    assert len(text.splitlines()) == 4
    with pytest.raises(ValueError):
        wkv_bench([4, 2])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 20), st.integers(1, 5), st.floats(-3, 3), st.integers(0, 2**31), st.booleans())
def test_constant_values_are_invariant(T, C, c, seed, bidirectional):
    rng = np.random.default_rng(seed)
    k, w, u = rng.normal(size=(T, C)) * 3, rng.normal(size=C), rng.normal(size=C)
    fast = wkv_bidirectional if bidirectional else wkv_causal
    out = fast(k, np.full((T, C), c), w, u).data
    np.testing.assert_allclose(out, c, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 24), st.integers(1, 4), st.integers(0, 2**31), st.booleans())
def test_output_in_convex_hull(T, C, seed, bidirectional):
    rng = np.random.default_rng(seed)
    k, v = rng.normal(size=(T, C)) * 5, rng.normal(size=(T, C))
    w, u = rng.normal(size=C) * 2, rng.normal(size=C) * 2
    fast = wkv_bidirectional if bidirectional else wkv_causal
    out = fast(k, v, w, u).data
    assert (out >= v.min(0) - 1e-9).all() and (out <= v.max(0) + 1e-9).all()
