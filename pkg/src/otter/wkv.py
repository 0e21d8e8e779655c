"""Attention-free WKV recurrences: causal and bidirectional.

Both kernels compute, per channel, a convex combination of values with
weights ``exp(-(dist - 1) * w + k_i)`` for neighbours and ``exp(u + k_t)``
for the current token. ``dist`` is ``t - 1 - i`` (causal, i < t) or
``|t - i| - 1`` (bidirectional, i != t).

The streaming kernels scan once per direction carrying a numerator, a
denominator and the running maximum exponent, so no exponential is ever
evaluated at a positive argument. The backward pass is a handwritten
adjoint in the same log domain; the oracles are direct double sums.

When every decay is nonnegative and keys and bonus stay within a bounded
range, a rescaled path is used instead: all weights are divided by
``exp(max_t k_t)`` per sequence, so the scans reduce to multiply-adds with
the factor ``exp(-w) <= 1`` and the exponentials run vectorised. Both paths
compute the same quantity.
"""

from __future__ import annotations

import timeit
from typing import Sequence

import numpy as np
from numba import njit

from .numerics import NumericsError, ShapeError, Tensor, as_tensor, make

NEG_INF = -np.inf


def _check_inputs(k: np.ndarray, v: np.ndarray, w: np.ndarray, u: np.ndarray):
    if k.shape != v.shape:
        raise ShapeError(f"wkv: key shape {k.shape} != value shape {v.shape}")
    if k.ndim not in (2, 3):
        raise ShapeError(f"wkv: expected (T, C) or (B, T, C), got {k.shape}")
    C = k.shape[-1]
    if w.shape != (C,) or u.shape != (C,):
        raise ShapeError(f"wkv: decay/bonus must have shape ({C},), got {w.shape} and {u.shape}")
    if k.shape[-2] < 1:
        raise ShapeError("wkv: need at least one token")


# -- oracles ---------------------------------------------------------------


def _oracle(k, v, w, u, bidirectional: bool) -> np.ndarray:
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    _check_inputs(k, v, w, u)
    if k.ndim == 3:
        return np.stack([_oracle(kb, vb, w, u, bidirectional) for kb, vb in zip(k, v)])
    T, C = k.shape
    t = np.arange(T)[:, None]
    i = np.arange(T)[None, :]
    dist = (np.abs(t - i) if bidirectional else t - i) - 1.0
    out = np.empty((T, C))
    for c in range(C):
        expo = -dist * w[c] + k[None, :, c]
        np.fill_diagonal(expo, u[c] + k[:, c])
        if not bidirectional:
            expo[i > t] = NEG_INF
        with np.errstate(over="ignore"):
            weights = np.exp(expo)
        if not np.isfinite(weights).all():
            tt = int(np.argwhere(~np.isfinite(weights))[0, 0])
            raise NumericsError(f"wkv oracle: exponential overflow at t={tt}, channel={c}")
        num = 0.0
        den = 0.0
        for j in range(T):
            num = num + weights[:, j] * v[j, c]
            den = den + weights[:, j]
        out[:, c] = num / den
    if not np.isfinite(out).all():
        raise NumericsError("wkv oracle: non-finite result")
    return out


def wkv_causal_oracle(k, v, w, u) -> np.ndarray:
    """Direct double summation of the causal recurrence in float64."""
    return _oracle(k, v, w, u, bidirectional=False)


def wkv_bidirectional_oracle(k, v, w, u) -> np.ndarray:
    """Direct double summation over all i != t in float64."""
    return _oracle(k, v, w, u, bidirectional=True)


# -- streaming kernels ----------------------------------------------------


@njit(cache=True)
def _scan_states(kk, vv, w, reverse, sa, sb, sp, da, db):
    # State "before" each position in scan order, scaled by exp(sp):
    # sa = sum e^{-(d-1)w + k_i} v_i, sb = same without v, da/db carry an extra (d-1) factor.
    T = kk.shape[0]
    a = 0.0
    b = 0.0
    a1 = 0.0
    b1 = 0.0
    p = -np.inf
    for step in range(T):
        t = T - 1 - step if reverse else step
        sa[t] = a
        sb[t] = b
        sp[t] = p
        da[t] = a1
        db[t] = b1
        kt = kk[t]
        decayed = p - w
        if decayed >= kt:
            q, e1, e2 = decayed, 1.0, np.exp(kt - decayed)
        else:
            q, e1, e2 = kt, np.exp(decayed - kt), 1.0
        a1 = e1 * (a1 + a)
        b1 = e1 * (b1 + b)
        a = e1 * a + e2 * vv[t]
        b = e1 * b + e2
        p = q


@njit(cache=True)
def _forward(k, v, w, u, bidirectional):
    B, T, C = k.shape
    y = np.empty((B, T, C))
    sa = np.empty(T)
    sb = np.empty(T)
    sp = np.empty(T)
    for bi in range(B):
        for c in range(C):
            wc = np.float64(w[c])
            uc = np.float64(u[c])
            if bidirectional:
                # backward-direction states first, combined during the forward sweep
                a = 0.0
                b = 0.0
                p = -np.inf
                for t in range(T - 1, -1, -1):
                    sa[t] = a
                    sb[t] = b
                    sp[t] = p
                    kt = np.float64(k[bi, t, c])
                    decayed = p - wc
                    if decayed >= kt:
                        q, e1, e2 = decayed, 1.0, np.exp(kt - decayed)
                    else:
                        q, e1, e2 = kt, np.exp(decayed - kt), 1.0
                    a = e1 * a + e2 * np.float64(v[bi, t, c])
                    b = e1 * b + e2
                    p = q
            a = 0.0
            b = 0.0
            p = -np.inf
            for t in range(T):
                kt = np.float64(k[bi, t, c])
                vt = np.float64(v[bi, t, c])
                bonus = uc + kt
                if bidirectional:
                    # the bonus is finite, so q is finite and exp(-inf - q) = 0 for empty states
                    rp = sp[t]
                    q = max(max(p, rp), bonus)
                    ef = 1.0 if p == q else np.exp(p - q)
                    er = 1.0 if rp == q else np.exp(rp - q)
                    eb = 1.0 if bonus == q else np.exp(bonus - q)
                    y[bi, t, c] = (ef * a + er * sa[t] + eb * vt) / (ef * b + er * sb[t] + eb)
                elif p >= bonus:
                    eb = np.exp(bonus - p)
                    y[bi, t, c] = (a + eb * vt) / (b + eb)
                else:
                    ef = np.exp(p - bonus)
                    y[bi, t, c] = (ef * a + vt) / (ef * b + 1.0)
                decayed = p - wc
                if decayed >= kt:
                    q, e1, e2 = decayed, 1.0, np.exp(kt - decayed)
                else:
                    q, e1, e2 = kt, np.exp(decayed - kt), 1.0
                a = e1 * a + e2 * vt
                b = e1 * b + e2
                p = q
    return y


@njit(cache=True)
def _adjoint(kk, vv, yy, g, q, w, reverse, gk, gv):
    # Adds contributions of e^{k_i} * sum_t e^{-(d-1)w} alpha_t (v_i - y_t) where t reads
    # state containing i; alpha_t = g_t e^{-q_t}. Kept as (acc * e^{o}) to stay bounded.
    T = kk.shape[0]
    acc_a = 0.0
    acc_b = 0.0
    o = -np.inf
    for step in range(T):
        i = step if reverse else T - 1 - step
        if o > -np.inf:
            ek = np.exp(kk[i] + o)
            gv[i] += acc_a * ek
            gk[i] += ek * (vv[i] * acc_a - acc_b)
        decayed = o - w
        nq = -q[i]
        if decayed >= nq:
            o_new, s1, s2 = decayed, 1.0, np.exp(nq - decayed)
        else:
            o_new, s1, s2 = nq, np.exp(decayed - nq), 1.0
        acc_a = acc_a * s1 + g[i] * s2
        acc_b = acc_b * s1 + g[i] * yy[i] * s2
        o = o_new


@njit(cache=True)
def _backward(k, v, w, u, gy, bidirectional):
    B, T, C = k.shape
    gk = np.zeros((B, T, C))
    gv = np.zeros((B, T, C))
    gw = np.zeros(C)
    gu = np.zeros(C)
    kk = np.empty(T)
    vv = np.empty(T)
    fa = np.empty(T)
    fb = np.empty(T)
    fp = np.empty(T)
    fda = np.empty(T)
    fdb = np.empty(T)
    ra = np.zeros(T)
    rb = np.zeros(T)
    rp = np.full(T, -np.inf)
    rda = np.zeros(T)
    rdb = np.zeros(T)
    yy = np.empty(T)
    q = np.empty(T)
    g = np.empty(T)
    gkk = np.empty(T)
    gvv = np.empty(T)
    for bi in range(B):
        for c in range(C):
            wc = np.float64(w[c])
            uc = np.float64(u[c])
            for t in range(T):
                kk[t] = k[bi, t, c]
                vv[t] = v[bi, t, c]
                gkk[t] = 0.0
                gvv[t] = 0.0
            _scan_states(kk, vv, wc, False, fa, fb, fp, fda, fdb)
            if bidirectional:
                _scan_states(kk, vv, wc, True, ra, rb, rp, rda, rdb)
            for t in range(T):
                bonus = uc + kk[t]
                qt = max(max(fp[t], rp[t]), bonus)
                ef = 1.0 if fp[t] == qt else np.exp(fp[t] - qt)
                er = 1.0 if rp[t] == qt else np.exp(rp[t] - qt)
                eb = 1.0 if bonus == qt else np.exp(bonus - qt)
                den = ef * fb[t] + er * rb[t] + eb
                yt = (ef * fa[t] + er * ra[t] + eb * vv[t]) / den
                gt = np.float64(gy[bi, t, c]) / den
                yy[t] = yt
                q[t] = qt
                g[t] = gt
                direct = gt * eb
                gvv[t] += direct
                gkk[t] += direct * (vv[t] - yt)
                gu[c] += direct * (vv[t] - yt)
                gw[c] -= gt * (ef * (fda[t] - yt * fdb[t]) + er * (rda[t] - yt * rdb[t]))
            _adjoint(kk, vv, yy, g, q, wc, False, gkk, gvv)
            if bidirectional:
                _adjoint(kk, vv, yy, g, q, wc, True, gkk, gvv)
            for t in range(T):
                gk[bi, t, c] = gkk[t]
                gv[bi, t, c] = gvv[t]
    return gk, gv, gw, gu


# Rescaled path: inputs are (S, T) rows, one per (batch, channel) sequence,
# with E = exp(k - m), EB = exp(u + k - m) for the row maximum m.
SCALED_RANGE = 600.0  # bound on key spread + |u|; keeps exp(-range) far from underflow


@njit(cache=True)
def _scaled_states(E, V, dw, reverse, sa, sb, da, db):
    T = E.shape[0]
    a = 0.0
    b = 0.0
    a1 = 0.0
    b1 = 0.0
    for step in range(T):
        t = T - 1 - step if reverse else step
        sa[t] = a
        sb[t] = b
        da[t] = a1
        db[t] = b1
        a1 = dw * (a1 + a)
        b1 = dw * (b1 + b)
        a = dw * a + E[t] * V[t]
        b = dw * b + E[t]


@njit(cache=True)
def _scaled_forward(E, V, EB, dw, bidirectional):
    S, T = E.shape
    y = np.empty((S, T))
    ra = np.zeros(T)
    rb = np.zeros(T)
    for s in range(S):
        d = dw[s]
        if bidirectional:
            a = 0.0
            b = 0.0
            for t in range(T - 1, -1, -1):
                ra[t] = a
                rb[t] = b
                a = d * a + E[s, t] * V[s, t]
                b = d * b + E[s, t]
        a = 0.0
        b = 0.0
        for t in range(T):
            num = a + ra[t] + EB[s, t] * V[s, t]
            den = b + rb[t] + EB[s, t]
            y[s, t] = num / den
            a = d * a + E[s, t] * V[s, t]
            b = d * b + E[s, t]
    return y


@njit(cache=True)
def _scaled_adjoint(E, V, yy, g, dw, reverse, gk, gv):
    # gv_i += E_i * sum_t dw^(d-1) g_t over the t whose state contains i
    T = E.shape[0]
    acc_a = 0.0
    acc_b = 0.0
    for step in range(T):
        i = step if reverse else T - 1 - step
        gv[i] += acc_a * E[i]
        gk[i] += E[i] * (V[i] * acc_a - acc_b)
        acc_a = dw * acc_a + g[i]
        acc_b = dw * acc_b + g[i] * yy[i]


@njit(cache=True)
def _scaled_backward(E, V, EB, dw, gy, bidirectional):
    S, T = E.shape
    gk = np.zeros((S, T))
    gv = np.zeros((S, T))
    gw = np.zeros(S)
    gu = np.zeros(S)
    fa = np.empty(T)
    fb = np.empty(T)
    fda = np.empty(T)
    fdb = np.empty(T)
    ra = np.zeros(T)
    rb = np.zeros(T)
    rda = np.zeros(T)
    rdb = np.zeros(T)
    yy = np.empty(T)
    g = np.empty(T)
    for s in range(S):
        d = dw[s]
        _scaled_states(E[s], V[s], d, False, fa, fb, fda, fdb)
        if bidirectional:
            _scaled_states(E[s], V[s], d, True, ra, rb, rda, rdb)
        for t in range(T):
            eb = EB[s, t]
            den = fb[t] + rb[t] + eb
            yt = (fa[t] + ra[t] + eb * V[s, t]) / den
            gt = gy[s, t] / den
            yy[t] = yt
            g[t] = gt
            direct = gt * eb
            gv[s, t] += direct
            gk[s, t] += direct * (V[s, t] - yt)
            gu[s] += direct * (V[s, t] - yt)
            gw[s] -= gt * (fda[t] - yt * fdb[t] + rda[t] - yt * rdb[t])
        _scaled_adjoint(E[s], V[s], yy, g, d, False, gk[s], gv[s])
        if bidirectional:
            _scaled_adjoint(E[s], V[s], yy, g, d, True, gk[s], gv[s])
    return gk, gv, gw, gu


def _scaled_inputs(k: np.ndarray, v: np.ndarray, w: np.ndarray, u: np.ndarray):
    """(S, T) rows for the rescaled path, or None when it is not safe."""
    w64 = w.astype(np.float64)
    u64 = u.astype(np.float64)
    if w64.min() < 0:
        return None
    B, T, C = k.shape
    kr = np.ascontiguousarray(k.transpose(0, 2, 1), dtype=np.float64).reshape(B * C, T)
    m = kr.max(axis=1, keepdims=True)
    if (m[:, 0] - kr.min(axis=1)).max() + np.abs(u64).max() > SCALED_RANGE:
        return None
    vr = np.ascontiguousarray(v.transpose(0, 2, 1), dtype=np.float64).reshape(B * C, T)
    E = np.exp(kr - m)
    EB = E * np.tile(np.exp(u64), B)[:, None]
    dw = np.tile(np.exp(-w64), B)
    return E, vr, EB, dw


def _rows_to_btc(x: np.ndarray, B: int, C: int) -> np.ndarray:
    return x.reshape(B, C, -1).transpose(0, 2, 1)


def _as3d(x: np.ndarray) -> np.ndarray:
    return x[None] if x.ndim == 2 else x


def _wkv(k, v, w, u, bidirectional: bool) -> Tensor:
    k, v, w, u = (as_tensor(t) for t in (k, v, w, u))
    _check_inputs(k.data, v.data, w.data, u.data)
    squeeze = k.ndim == 2
    kd, vd = _as3d(k.data), _as3d(v.data)
    B, T, C = kd.shape
    scaled = _scaled_inputs(kd, vd, w.data, u.data)
    if scaled is not None:
        y = _rows_to_btc(_scaled_forward(*scaled, bidirectional), B, C)
    else:
        y = _forward(kd, vd, w.data, u.data, bidirectional)
    y = np.ascontiguousarray(y, dtype=k.data.dtype)
    if squeeze:
        y = y[0]
    dtype = k.data.dtype

    def backward(gy):
        gy = _as3d(gy)
        if scaled is not None:
            gyr = np.ascontiguousarray(gy.transpose(0, 2, 1), dtype=np.float64).reshape(B * C, T)
            gk, gv, gw, gu = _scaled_backward(*scaled, gyr, bidirectional)
            gk, gv = _rows_to_btc(gk, B, C), _rows_to_btc(gv, B, C)
            gw, gu = gw.reshape(B, C).sum(0), gu.reshape(B, C).sum(0)
        else:
            gk, gv, gw, gu = _backward(kd, vd, w.data, u.data, gy, bidirectional)
        if squeeze:
            gk, gv = gk[0], gv[0]
        return (
            np.ascontiguousarray(gk, dtype=dtype),
            np.ascontiguousarray(gv, dtype=dtype),
            gw.astype(dtype),
            gu.astype(dtype),
        )

    return make(y, (k, v, w, u), backward, "wkv_bidirectional" if bidirectional else "wkv_causal")


def wkv_causal(k, v, w, u) -> Tensor:
    """Streaming causal WKV over (T, C) or (B, T, C) keys/values."""
    return _wkv(k, v, w, u, bidirectional=False)


def wkv_bidirectional(k, v, w, u) -> Tensor:
    """Streaming bidirectional WKV: one scan per direction, bonus term shared."""
    return _wkv(k, v, w, u, bidirectional=True)


# -- benchmark -------------------------------------------------------------


def _loops(timer: timeit.Timer) -> int:
    """Calls per timing sample so one sample lasts >= 0.2 s and swamps timer noise."""
    return timer.autorange()[0]


def wkv_bench(
    lengths: Sequence[int],
    channels: int = 16,
    bidirectional: bool = False,
    repeats: int = 5,
    seed: int = 0,
) -> list[dict]:
    """Wall-times (ms) of the streaming kernel and the oracle for each T.

    Lengths are timed in interleaved rounds and each keeps its best round,
    so a slow spell on the host does not land on one length only. Rows
    carry the ratio to the previous length so doubling behaviour can be
    read off directly.
    """
    lengths = list(lengths)
    if any(b <= a for a, b in zip(lengths, lengths[1:])):
        raise ValueError("lengths must be strictly ascending")
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.0, 1.0, channels)
    u = rng.normal(0.0, 1.0, channels)
    oracle = wkv_bidirectional_oracle if bidirectional else wkv_causal_oracle
    _forward(np.zeros((1, 1, channels)), np.zeros((1, 1, channels)), w, u, bidirectional)  # compile
    cases = []
    for T in lengths:
        k = rng.normal(0.0, 1.0, (1, T, channels))
        v = rng.normal(0.0, 1.0, (1, T, channels))
        stream = timeit.Timer(lambda k=k, v=v: _forward(k, v, w, u, bidirectional))
        direct = timeit.Timer(lambda k=k, v=v: oracle(k[0], v[0], w, u))
        cases.append((stream, _loops(stream), direct, _loops(direct)))
    best = np.full((len(lengths), 2), np.inf)
    for r in range(repeats):
        for i, (stream, n_s, direct, n_d) in enumerate(cases):
            best[i, 0] = min(best[i, 0], stream.timeit(n_s) / n_s)
            if r < max(1, repeats // 2):
                best[i, 1] = min(best[i, 1], direct.timeit(n_d) / n_d)
    rows = []
    for T, (stream, direct) in zip(lengths, best * 1e3):
        row = {"T": T, "stream_ms": stream, "oracle_ms": direct}
        if rows:
            row["stream_ratio"] = stream / rows[-1]["stream_ms"]
            row["oracle_ratio"] = direct / rows[-1]["oracle_ms"]
        rows.append(row)
    return rows


def format_bench(rows: list[dict]) -> str:
    lines = ["T\tstream_ms\toracle_ms\tstream_ratio\toracle_ratio"]
    for r in rows:
        sr = f"{r['stream_ratio']:.2f}" if "stream_ratio" in r else "-"
        orr = f"{r['oracle_ratio']:.2f}" if "oracle_ratio" in r else "-"
        lines.append(f"{r['T']}\t{r['stream_ms']:.4f}\t{r['oracle_ms']:.4f}\t{sr}\t{orr}")
    return "\n".join(lines) + "\n"
