import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otter import numerics as nm
from otter.mixing import (
    RWKV4,
    RWKV56,
    channel_mix,
    init_channel_params,
    init_mix_params,
    interpolate,
    q_shift,
    quarter_bounds,
    spatial_channel_mix,
    spatial_mix,
    time_mix,
    token_interp,
    token_shift,
)
from otter.oracles import q_shift_loop
from otter.wkv import wkv_bidirectional, wkv_causal

from .helpers import assert_grads_match


@pytest.fixture(autouse=True)
def f64():
    with nm.precision(np.float64):
        yield


def test_q_shift_one_by_one_grid_is_zero():
    assert not q_shift(np.ones((1, 1, 1, 8))).data.any()


def test_q_shift_interior_of_constant_grid():
    out = q_shift(np.full((1, 3, 3, 4), 2.5)).data
    np.testing.assert_array_equal(out[0, 1, 1], 2.5)


def test_q_shift_markers_match_loop_oracle():
    x = np.arange(3 * 3 * 8, dtype=np.float64).reshape(1, 3, 3, 8)
    np.testing.assert_array_equal(q_shift(x).data, q_shift_loop(x))
    # quarter 0 of cell (1, 1) comes from the row above
    np.testing.assert_array_equal(q_shift(x).data[0, 1, 1, 0:2], x[0, 0, 1, 0:2])


def test_q_shift_requires_quarters():
    with pytest.raises(nm.ShapeError):
        q_shift(np.zeros((1, 2, 2, 3)))
    assert quarter_bounds(3, strict=False) == [0, 1, 2, 3, 3]


def test_q_shift_uneven_split_matches_loop_oracle():
    x = np.random.default_rng(0).normal(size=(2, 4, 3, 3))
    np.testing.assert_array_equal(q_shift(x, strict=False).data, q_shift_loop(x, strict=False))


def test_shift_adjoints():
    rng = np.random.default_rng(1)
    x = nm.parameter(rng.normal(size=(2, 3, 4, 8)))
    g = rng.normal(size=(2, 3, 4, 8))
    assert_grads_match(lambda: nm.sum_(q_shift(x) * g), [x])
    y = nm.parameter(rng.normal(size=(2, 5, 3)))
    gy = rng.normal(size=(2, 5, 3))
    assert_grads_match(lambda: nm.sum_(token_shift(y) * gy), [y])


def test_token_shift_zero_before_first():
    x = np.arange(6.0).reshape(1, 3, 2)
    np.testing.assert_array_equal(token_shift(x).data, [[[0, 0], [0, 1], [2, 3]]])


def test_interpolation_endpoints_exact():
    rng = np.random.default_rng(2)
    x, xs = rng.normal(size=(4, 8)), rng.normal(size=(4, 8))
    assert np.array_equal(interpolate(x, xs, np.ones(8)).data, x)
    assert np.array_equal(interpolate(x, x, np.zeros(8)).data, 2 * x)


def test_token_interp_mu_one_ignores_shift():
    rng = np.random.default_rng(3)
    p = init_mix_params(rng, 8, RWKV56)
    for n in "rkvg":
        getattr(p, f"mix_{n}").data[:] = 1e6  # sigmoid saturates to exactly 1
    x, xs = rng.normal(size=(5, 8)), rng.normal(size=(5, 8))
    out = token_interp(x, xs, p)
    for n in "rkvg":
        assert np.array_equal(out[n].data, x @ getattr(p, f"proj_{n}").data)


def test_token_interp_two_step_oracle():
    rng = np.random.default_rng(4)
    p = init_mix_params(rng, 8, RWKV4)
    p.mix_k.data[:] = rng.normal(size=8)
    x, xs = rng.normal(size=(5, 8)), rng.normal(size=(5, 8))
    mu = 1 / (1 + np.exp(-p.mix_k.data))
    np.testing.assert_allclose(token_interp(x, xs, p)["k"].data, (x + (1 - mu) * xs) @ p.proj_k.data, atol=1e-12)


def _layer_norm(x, g, b, eps=1e-5):
    m = x.mean(-1, keepdims=True)
    v = x.var(-1, keepdims=True)
    return (x - m) / np.sqrt(v + eps) * g + b


def _sig(x):
    return 1 / (1 + np.exp(-x))


def _mix_oracle(x, xs, p, kernel):
    def proj(n):
        mu = _sig(getattr(p, f"mix_{n}").data)
        return (x + (1 - mu) * xs) @ getattr(p, f"proj_{n}").data

    r, k, v = proj("r"), proj("k"), proj("v")
    o = _layer_norm(_sig(r) * kernel(k, v, p.decay.data, p.bonus.data).data, p.norm_gain.data, p.norm_bias.data)
    if p.variant == RWKV56:
        o = _sig(proj("g")) * o if p.gate_act == "sigmoid" else proj("g") * _sig(proj("g")) * o
    return o @ p.proj_o.data


@pytest.mark.parametrize("variant", [RWKV4, RWKV56])
def test_spatial_mix_composition_oracle(variant):
    rng = np.random.default_rng(5)
    p = init_mix_params(rng, 8, variant)
    p.mix_r.data[:] = rng.normal(size=8)
    x = rng.normal(size=(2, 3, 4, 8))
    ref = _mix_oracle(x.reshape(2, 12, 8), q_shift_loop(x).reshape(2, 12, 8), p, wkv_bidirectional)
    np.testing.assert_allclose(spatial_mix(x, p).data.reshape(2, 12, 8), ref, atol=1e-6)


def test_time_mix_composition_oracle_and_causality():
    rng = np.random.default_rng(6)
    p = init_mix_params(rng, 8, RWKV56, "silu")
    x = rng.normal(size=(1, 4, 8))
    xs = np.concatenate([np.zeros((1, 1, 8)), x[:, :-1]], 1)
    np.testing.assert_allclose(time_mix(x, p).data, _mix_oracle(x, xs, p, wkv_causal), atol=1e-6)
    x2 = x.copy()
    x2[:, 2:] += 1.0
    np.testing.assert_allclose(time_mix(x2, p).data[:, :2], time_mix(x, p).data[:, :2], rtol=0, atol=1e-13)


def test_single_token_spatial_mix_rwkv4():
    rng = np.random.default_rng(7)
    p = init_mix_params(rng, 4, RWKV4)
    x = rng.normal(size=(1, 1, 1, 4))
    r = x[0, 0] @ p.proj_r.data * 1.0
    v = x[0, 0] @ p.proj_v.data
    ref = _layer_norm(_sig(r) * v, 1.0, 0.0)
    np.testing.assert_allclose(spatial_mix(x, p).data[0, 0], ref, atol=1e-12)


def test_closed_gate_zeroes_output():
    rng = np.random.default_rng(8)
    p = init_mix_params(rng, 4, RWKV56)
    p.mix_g.data[:] = 1e6
    p.proj_g.data[:] = -1e3 * np.eye(4)  # positive inputs drive the gate pre-activation far negative
    y = spatial_mix(np.abs(rng.normal(size=(1, 2, 2, 4))) + 1.0, p).data
    assert np.abs(y).max() < 1e-100


def test_rwkv56_with_open_gate_reproduces_rwkv4():
    rng = np.random.default_rng(9)
    p56 = init_mix_params(rng, 4, RWKV56)
    p4 = init_mix_params(np.random.default_rng(9), 4, RWKV4)
    for name in ("proj_r", "proj_k", "proj_v"):
        getattr(p4, name).data[:] = getattr(p56, name).data
    p56.proj_g.data[:] = 1e3 * np.eye(4)
    x = np.abs(rng.normal(size=(1, 3, 3, 4))) + 1.0
    np.testing.assert_array_equal(spatial_mix(x, p56).data, spatial_mix(x, p4).data)


def test_channel_mix_saturation():
    rng = np.random.default_rng(10)
    p = init_channel_params(rng, 4)
    x = np.abs(rng.normal(size=(3, 4))) + 1
    p.proj_v.data[:] = -np.eye(4)  # relu kills all-negative V
    assert not channel_mix(x, x, p).data.any()
    p.proj_v.data[:] = np.eye(4)
    p.proj_r.data[:] = -1e4 * np.eye(4)
    assert np.abs(channel_mix(x, x, p).data).max() < 1e-100


def test_channel_mix_composition_oracle():
    rng = np.random.default_rng(11)
    p = init_channel_params(rng, 4)
    x, xs = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    mu = 0.5
    r = (x + (1 - mu) * xs) @ p.proj_r.data
    v = (x + (1 - mu) * xs) @ p.proj_v.data
    np.testing.assert_allclose(channel_mix(x, xs, p).data, _sig(r) * np.maximum(v, 0), atol=1e-12)


def test_permutation_equivariance_without_shift_or_decay():
    rng = np.random.default_rng(12)
    p = init_mix_params(rng, 4, RWKV4)
    for n in "rkv":
        getattr(p, f"mix_{n}").data[:] = 1e6
    p.decay.data[:] = 0.0
    x = rng.normal(size=(1, 1, 6, 4))
    perm = rng.permutation(6)
    a = spatial_mix(x, p).data[0, 0][perm]
    b = spatial_mix(x[:, :, perm], p).data[0, 0]
    np.testing.assert_allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("variant", [RWKV4, RWKV56])
def test_mixing_gradients(variant):
    rng = np.random.default_rng(13)
    p = init_mix_params(rng, 4, variant)
    c = init_channel_params(rng, 4)
    for t in (p.mix_r, p.mix_k, p.bonus, c.mix_v):
        t.data[:] = rng.normal(size=t.shape)
    x = nm.parameter(rng.normal(size=(1, 2, 3, 4)))
    g = rng.normal(size=(1, 2, 3, 4))
    params = [x] + [t for _, t in p.tensors()] + [t for _, t in c.tensors()]
    assert_grads_match(lambda: nm.sum_(spatial_channel_mix(spatial_mix(x, p), c) * g), params, rtol=1e-5, atol=1e-7)


def test_time_mix_gradients():
    rng = np.random.default_rng(14)
    p = init_mix_params(rng, 4, RWKV56, "silu")
    x = nm.parameter(rng.normal(size=(2, 5, 4)))
    g = rng.normal(size=(2, 5, 4))
    params = [x] + [t for _, t in p.tensors()]
    assert_grads_match(lambda: nm.sum_(time_mix(x, p) * g), params, rtol=1e-5, atol=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 3), st.integers(0, 2**31))
def test_q_shift_property_matches_loop(H, W, quarter, seed):
    x = np.random.default_rng(seed).normal(size=(1, H, W, 4 * quarter))
    np.testing.assert_array_equal(q_shift(x).data, q_shift_loop(x))
