"""Dense tensors with tape-based reverse-mode differentiation.

Every differentiable operation in the package goes through :func:`make`,
which checks the result for NaN/Inf and, when a :class:`GradTape` is
active and some input requires a gradient, appends a backward closure to
the tape. Replaying the tape in reverse creation order is a valid
topological order, so each node is visited exactly once.
"""

from __future__ import annotations

import contextlib
import math
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

LAYER_NORM_EPS = 1e-5

_state = threading.local()


class NumericsError(ArithmeticError):
    """A library operation produced a non-finite value."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the operation."""


class GradError(LookupError):
    """A gradient was requested for a tensor that never entered the tape."""


def get_dtype() -> type:
    return getattr(_state, "dtype", np.float32)


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the storage dtype of newly built tensors."""
    prev = get_dtype()
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=get_dtype())
        if not np.isfinite(arr).all():
            raise NumericsError(f"tensor{'' if name is None else ' ' + name}: non-finite input")
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class GradTape:
    """Records differentiable operations for one backward pass.

    Use as a context manager; operations executed inside the block whose
    inputs require gradients are appended in creation order.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "GradTape":
        stack = getattr(_state, "tapes", None)
        if stack is None:
            stack = _state.tapes = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _state.tapes.pop()
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def record(self, out: Tensor, parents: tuple[Tensor, ...], backward: Callable) -> None:
        self._nodes.append((out, parents, backward))

    def gradient(self, output: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
        """Exact reverse-mode gradients of a scalar ``output``."""
        if output.data.size != 1:
            raise ShapeError(f"gradient needs a scalar output, got shape {output.shape}")
        seen = {id(output)}
        for _, parents, _ in self._nodes:
            seen.update(id(p) for p in parents)
        for p in params:
            if id(p) not in seen:
                raise GradError(f"parameter {p.name or p!r} is not on the tape")

        grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
        for out, parents, backward in reversed(self._nodes):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for p, pg in zip(parents, backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                k = id(p)
                grads[k] = grads[k] + pg if k in grads else pg
        return [grads.get(id(p), np.zeros_like(p.data)) for p in params]


def _active_tape() -> GradTape | None:
    stack = getattr(_state, "tapes", None)
    return stack[-1] if stack else None


def check_finite(data: np.ndarray, op: str) -> None:
    # one reduction pass; any inf/nan survives into the sum
    if not math.isfinite(float(np.add.reduce(data, axis=None))):
        if not np.isfinite(data).all():
            raise NumericsError(f"{op}: non-finite result")


def make(data: np.ndarray, parents: tuple[Tensor, ...], backward: Callable, op: str, check: bool = True) -> Tensor:
    """Wrap an op result, recording ``backward`` on the active tape if needed.

    ``backward(g)`` returns one gradient (or None) per parent. ``check=False``
    is for pure data movement, which cannot create non-finite values.
    """
    if check:
        check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.name = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        tape = _active_tape()
        if tape is not None:
            tape.record(out, parents, backward)
    return out


def reduce_sum(x: np.ndarray, axes: tuple[int, ...], keepdims: bool = False) -> np.ndarray:
    """Float64 sum over ``axes``.

    A leading or trailing block of axes is summed with a BLAS matrix-vector
    product, which is far faster than ``ndarray.sum`` when the kept extent
    is tiny (e.g. three colour channels).
    """
    nd = x.ndim
    axes = tuple(sorted(a % nd for a in axes))
    kept = tuple(i for i in range(nd) if i not in axes)
    if not axes:
        return x.astype(np.float64)
    x64 = np.ascontiguousarray(x, dtype=np.float64)
    if axes == tuple(range(len(axes))):
        lead = int(np.prod(x.shape[: len(axes)]))
        out = np.ones(lead) @ x64.reshape(lead, -1) if lead else np.zeros(int(np.prod([x.shape[i] for i in kept])))
    elif axes == tuple(range(nd - len(axes), nd)):
        tail = int(np.prod(x.shape[nd - len(axes):]))
        out = x64.reshape(-1, tail) @ np.ones(tail)
    else:
        out = x64.sum(axis=axes)
    out = np.asarray(out).reshape([x.shape[i] for i in kept])
    if keepdims:
        out = out.reshape([1 if i in axes else x.shape[i] for i in range(nd)])
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    axes = tuple(range(extra)) + tuple(
        extra + i for i, s in enumerate(shape) if s == 1 and g.shape[extra + i] != 1
    )
    return reduce_sum(g, axes).reshape(shape).astype(g.dtype)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- elementwise -----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        return (
            _unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
            _unbroadcast(g * ad, bd.shape) if b.requires_grad else None,
        )

    return make(ad * bd, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    ad, bd = a.data, b.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = ad / bd

    def backward(g):
        return (
            _unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
            _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None,
        )

    return make(out, (a, b), backward, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return make(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    ad = a.data
    return make(out, (a,), lambda g: (g / ad,), "log")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows and vectorises well
    return 0.5 + 0.5 * np.tanh(0.5 * x)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return make(out, (a,), lambda g: (g * out * (1 - out),), "sigmoid", check=False)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return make(a.data * mask, (a,), lambda g: (g * mask,), "relu", check=False)


def silu(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    s = _sigmoid(x)
    return make(x * s, (a,), lambda g: (g * (s * (1 + x * (1 - s))),), "silu", check=False)


def square(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return make(x * x, (a,), lambda g: (2 * g * x,), "square")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.data)

    def backward(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            gx = np.where(out > 0, g / (2 * np.where(out > 0, out, 1)), 0)
        return (gx.astype(out.dtype, copy=False),)

    return make(out, (a,), backward, "sqrt")


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "sigmoid": sigmoid,
    "relu": relu,
    "silu": silu,
    "identity": lambda x: x,
}

_UNARY = {"sigmoid": sigmoid, "relu": relu, "silu": silu, "neg": neg, "exp": exp}
_BINARY = {"add": add, "mul": mul}


def elementwise(kind: str, a, b=None) -> Tensor:
    """Apply one of add, mul, sigmoid, relu, silu, neg, exp.

    Binary kinds require equal shapes (use the operators for broadcasting).
    """
    if kind in _BINARY:
        a, b = as_tensor(a), as_tensor(b)
        if a.shape != b.shape:
            raise ShapeError(f"{kind}: shape mismatch {a.shape} vs {b.shape}")
        return _BINARY[kind](a, b)
    if kind in _UNARY:
        if b is not None:
            raise ValueError(f"{kind} is unary")
        return _UNARY[kind](a)
    raise ValueError(f"unknown elementwise kind {kind!r}")


def activation(kind: str) -> Callable[[Tensor], Tensor]:
    try:
        return ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None


# -- linear algebra and reductions ----------------------------------------


def matmul(a, b) -> Tensor:
    """``a @ b``; a may carry leading batch axes when b is a matrix."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: dimension mismatch {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    if bd.ndim == 2:
        a2 = ad.reshape(-1, ad.shape[-1])
        out = (a2 @ bd).reshape(ad.shape[:-1] + (bd.shape[1],))

        def backward(g):
            g2 = g.reshape(-1, g.shape[-1])
            ga = (g2 @ bd.T).reshape(ad.shape) if a.requires_grad else None
            gb = a2.T @ g2 if b.requires_grad else None
            return ga, gb

        return make(out, (a, b), backward, "matmul")

    out = np.matmul(ad, bd)

    def backward_batched(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape) if b.requires_grad else None
        return ga, gb

    return make(out, (a, b), backward_batched, "matmul")


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    shape = a.shape
    out = reduce_sum(a.data, axes, keepdims).astype(a.data.dtype)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).astype(g.dtype, copy=True),)

    return make(np.asarray(out), (a,), backward, "sum")


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    n = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return sum_(a, axes, keepdims) * (1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape", check=False)


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return make(np.ascontiguousarray(a.data.transpose(axes)), (a,), lambda g: (g.transpose(inv),), "transpose", check=False)


def flip(a, axis: int) -> Tensor:
    a = as_tensor(a)
    return make(np.flip(a.data, axis).copy(), (a,), lambda g: (np.flip(g, axis).copy(),), "flip", check=False)


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, type(None), type(Ellipsis))) for i in items)


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    basic = _is_basic_index(idx)

    def backward(g):
        gx = np.zeros_like(ad)
        if basic:
            gx[idx] = g
        else:
            np.add.at(gx, idx, g)
        return (gx,)

    out = ad[idx]
    return make(np.array(out, copy=True) if basic else out, (a,), backward, "getitem", check=False)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    sizes = [t.shape[axis] for t in ts]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return make(np.concatenate([t.data for t in ts], axis=axis), ts, backward, "concat", check=False)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(ts)))

    return make(np.stack([t.data for t in ts], axis=axis), ts, backward, "stack", check=False)


def pad(a, pad_width) -> Tensor:
    """Zero padding; ``pad_width`` as in ``np.pad``."""
    a = as_tensor(a)
    pw = tuple(tuple(p) for p in pad_width)
    sl = tuple(slice(lo, lo + n) for (lo, _), n in zip(pw, a.shape))
    return make(np.pad(a.data, pw), (a,), lambda g: (g[sl],), "pad", check=False)


def layer_norm(x, gain=None, bias=None, eps: float = LAYER_NORM_EPS, axis: int = -1) -> Tensor:
    """Normalize each slice along ``axis`` to zero mean and unit variance, then scale and shift."""
    x = as_tensor(x)
    if x.shape[axis] < 1:
        raise ShapeError("layer_norm: empty axis")
    xd = x.data
    ax = axis % xd.ndim
    n = xd.shape[ax]
    mu = reduce_sum(xd, (ax,), keepdims=True) / n
    xc = xd - mu
    var = reduce_sum(xc * xc, (ax,), keepdims=True) / n
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xc * inv).astype(xd.dtype)
    bshape = [1] * xd.ndim
    bshape[ax] = n
    out = xhat
    parents: list[Tensor] = [x]
    if gain is not None:
        gain = as_tensor(gain)
        out = out * gain.data.reshape(bshape)
        parents.append(gain)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data.reshape(bshape)
        parents.append(bias)
    red = tuple(i for i in range(xd.ndim) if i != ax)

    def backward(g):
        gh = g * gain.data.reshape(bshape) if gain is not None else g
        m1 = reduce_sum(gh, (ax,), keepdims=True) / n
        m2 = reduce_sum(gh * xhat, (ax,), keepdims=True) / n
        gx = ((gh - m1 - xhat * m2) * inv).astype(xd.dtype)
        res = [gx]
        if gain is not None:
            res.append(reduce_sum(g * xhat, red).astype(xd.dtype))
        if bias is not None:
            res.append(reduce_sum(g, red).astype(xd.dtype))
        return tuple(res)

    return make(np.ascontiguousarray(out, dtype=xd.dtype), tuple(parents), backward, "layer_norm")


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    xd = x.data.astype(np.float64)
    m = xd.max(axis=axis, keepdims=True)
    lse = m + np.log(np.exp(xd - m).sum(axis=axis, keepdims=True))
    out = (xd - lse).astype(x.data.dtype)
    p = np.exp(xd - lse)

    def backward(g):
        g64 = g.astype(np.float64)
        return ((g64 - p * g64.sum(axis=axis, keepdims=True)).astype(x.data.dtype),)

    return make(out, (x,), backward, "log_softmax")


# -- convolutions ---------------------------------------------------------


def conv2d(x, weight, bias=None) -> Tensor:
    """Stride-1 zero-padded 'same' convolution, channels-last.

    x: (B, H, W, Cin); weight: (kh, kw, Cin, Cout) with odd kernel sizes.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    kh, kw, cin, cout = weight.shape
    if x.ndim != 4 or x.shape[-1] != cin or kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with kernel {weight.shape}")
    B, H, W, _ = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    wd = weight.data
    out = np.zeros((B * H * W, cout), dtype=x.data.dtype)
    for i in range(kh):
        for j in range(kw):
            out += xp[:, i : i + H, j : j + W, :].reshape(-1, cin) @ wd[i, j]
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out += bias.data
        parents.append(bias)

    def backward(g):
        g2 = g.reshape(-1, cout)
        gxp = np.zeros_like(xp) if x.requires_grad else None
        gw = np.zeros_like(wd) if weight.requires_grad else None
        for i in range(kh):
            for j in range(kw):
                if gxp is not None:
                    gxp[:, i : i + H, j : j + W, :] += (g2 @ wd[i, j].T).reshape(B, H, W, cin)
                if gw is not None:
                    gw[i, j] = xp[:, i : i + H, j : j + W, :].reshape(-1, cin).T @ g2
        res = [gxp[:, ph : ph + H, pw : pw + W, :] if gxp is not None else None, gw]
        if bias is not None:
            res.append(reduce_sum(g2, (0,)).astype(g2.dtype))
        return tuple(res)

    return make(out.reshape(B, H, W, cout), tuple(parents), backward, "conv2d")


def conv1d(x, weight, bias=None) -> Tensor:
    """Stride-1 zero-padded 'same' convolution over axis 1 of (B, T, Cin); weight (k, Cin, Cout)."""
    x, weight = as_tensor(x), as_tensor(weight)
    k, cin, cout = weight.shape
    if x.ndim != 3 or x.shape[-1] != cin or k % 2 == 0:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with kernel {weight.shape}")
    B, T, _ = x.shape
    pk = k // 2
    xp = np.pad(x.data, ((0, 0), (pk, pk), (0, 0)))
    wd = weight.data
    out = np.zeros((B * T, cout), dtype=x.data.dtype)
    for i in range(k):
        out += xp[:, i : i + T, :].reshape(-1, cin) @ wd[i]
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out += bias.data
        parents.append(bias)

    def backward(g):
        g2 = g.reshape(-1, cout)
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(wd)
        for i in range(k):
            gxp[:, i : i + T, :] += (g2 @ wd[i].T).reshape(B, T, cin)
            gw[i] = xp[:, i : i + T, :].reshape(-1, cin).T @ g2
        res = [gxp[:, pk : pk + T, :], gw]
        if bias is not None:
            res.append(reduce_sum(g2, (0,)).astype(g2.dtype))
        return tuple(res)

    return make(out.reshape(B, T, cout), tuple(parents), backward, "conv1d")


# -- gradients -------------------------------------------------------------


def value_and_grad(fn: Callable[[], Tensor], params: Sequence[Tensor]) -> tuple[float, list[np.ndarray]]:
    """Evaluate ``fn`` under a fresh tape and return (value, gradients)."""
    with GradTape() as tape:
        out = fn()
    return float(out.data), tape.gradient(out, params)


def grad(fn: Callable[[], Tensor], params: Sequence[Tensor]) -> list[np.ndarray]:
    return value_and_grad(fn, params)[1]


def _scalar(v) -> float:
    return float(v.data) if isinstance(v, Tensor) else float(v)


def finite_diff(
    fn: Callable[[], Tensor | float],
    params: Sequence[Tensor],
    h: float = 1e-3,
    coords: Iterable[Sequence[int]] | None = None,
) -> list[np.ndarray]:
    """Central differences ``(f(p+h) - f(p-h)) / 2h`` per coordinate.

    ``coords`` optionally restricts each parameter to a list of flat indices;
    unvisited coordinates are returned as NaN.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    coords = list(coords) if coords is not None else [None] * len(params)
    out = []
    for p, idx in zip(params, coords):
        g = np.full(p.data.shape, np.nan if idx is not None else 0.0, dtype=np.float64)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size) if idx is None else idx:
            orig = flat[i]
            flat[i] = orig + h
            fp = _scalar(fn())
            flat[i] = orig - h
            fm = _scalar(fn())
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * h)
        out.append(g)
    return out


def directional_diff(fn: Callable[[], Tensor | float], param: Tensor, direction: np.ndarray, h: float = 1e-3) -> float:
    """Central difference of ``fn`` along ``direction`` in one parameter's space."""
    orig = param.data.copy()
    try:
        param.data = orig + h * direction.astype(orig.dtype)
        fp = _scalar(fn())
        param.data = orig - h * direction.astype(orig.dtype)
        fm = _scalar(fn())
    finally:
        param.data = orig
    return (fp - fm) / (2 * h)


def relative_error(a, b, floor: float = 1e-8) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
