"""Differentiable forward ops.

Each op computes its output with numpy and hands :func:`make_result` a closure
returning one gradient per input (``None`` where no gradient is needed).

Broadcasting is one-sided: the result must have the shape of one of the two
operands, and the other operand may only be missing leading dimensions or
carry size-1 axes.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .tensor import ShapeError, Tensor, make_result


def _wrap(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype), dtype=like.dtype)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        out = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None
    if out != a.shape and out != b.shape:
        raise ShapeError(f"{op}: two-sided broadcast of {a.shape} and {b.shape} is not supported")
    return out


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _need(t: Tensor) -> bool:
    return t.requires_grad


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = (a, _wrap(b, a)) if isinstance(a, Tensor) else (_wrap(a, b), b)
    _broadcast_shape("add", a, b)

    def bw(g):
        return (unbroadcast(g, a.shape) if _need(a) else None,
                unbroadcast(g, b.shape) if _need(b) else None)

    return make_result("add", a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = (a, _wrap(b, a)) if isinstance(a, Tensor) else (_wrap(a, b), b)
    _broadcast_shape("sub", a, b)

    def bw(g):
        return (unbroadcast(g, a.shape) if _need(a) else None,
                unbroadcast(-g, b.shape) if _need(b) else None)

    return make_result("sub", a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = (a, _wrap(b, a)) if isinstance(a, Tensor) else (_wrap(a, b), b)
    _broadcast_shape("mul", a, b)

    def bw(g):
        return (unbroadcast(g * b.data, a.shape) if _need(a) else None,
                unbroadcast(g * a.data, b.shape) if _need(b) else None)

    return make_result("mul", a.data * b.data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = (a, _wrap(b, a)) if isinstance(a, Tensor) else (_wrap(a, b), b)
    _broadcast_shape("div", a, b)
    out = a.data / b.data

    def bw(g):
        return (unbroadcast(g / b.data, a.shape) if _need(a) else None,
                unbroadcast(-g * out / b.data, b.shape) if _need(b) else None)

    return make_result("div", out, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    return make_result("neg", -a.data, (a,), lambda g: (-g,))


def power(a: Tensor, p: float) -> Tensor:
    out = a.data ** p
    return make_result("power", out, (a,), lambda g: (g * p * a.data ** (p - 1),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_result("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return make_result("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return make_result("sigmoid", s, (a,), lambda g: (g * s * (1 - s),))


def silu(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)

    def bw(g):
        return (g * (s + a.data * s * (1 - s)),)

    return make_result("silu", a.data * s, (a,), bw)


def softplus(a: Tensor) -> Tensor:
    x = a.data
    out = np.logaddexp(0, x).astype(x.dtype, copy=False)
    s = _sigmoid(x)
    return make_result("softplus", out, (a,), lambda g: (g * s,))


# ---------------------------------------------------------------- reductions

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a: Tensor, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    axes = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_result("sum", np.asarray(out), (a,), bw)


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    n = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = a.data.mean(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / n, a.shape).copy(),)

    return make_result("mean", np.asarray(out, dtype=a.dtype), (a,), bw)


def softmax(a: Tensor) -> Tensor:
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return make_result("softmax", s, (a,), bw)


def log_softmax(a: Tensor) -> Tensor:
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    s = np.exp(out)

    def bw(g):
        return (g - s * g.sum(axis=-1, keepdims=True),)

    return make_result("log_softmax", out, (a,), bw)


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``(..., m, k) @ (k, n)`` or equal-batch ``(..., m, k) @ (..., k, n)``."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions disagree for {a.shape} @ {b.shape}")
    if b.ndim > 2 and b.shape[:-2] != a.shape[:-2]:
        raise ShapeError(f"matmul: batch dimensions disagree for {a.shape} @ {b.shape}")
    if a.ndim < b.ndim:
        raise ShapeError(f"matmul: left operand {a.shape} has fewer dims than {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if _need(a) else None
        gb = None
        if _need(b):
            if b.ndim == 2:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return make_result("matmul", out, (a, b), bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


def layer_norm(x: Tensor, weight: Tensor | None, bias: Tensor | None, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis, then apply the optional elementwise affine."""
    d = x.shape[-1]
    for p in (weight, bias):
        if p is not None and p.shape != (d,):
            raise ShapeError(f"layer_norm: parameter shape {p.shape} does not match last axis {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat
    if weight is not None:
        out = out * weight.data
    if bias is not None:
        out = out + bias.data
    inputs = [x] + [p for p in (weight, bias) if p is not None]

    def bw(g):
        gx_hat = g * weight.data if weight is not None else g
        gx = rstd * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                     - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        grads = [gx]
        lead = tuple(range(g.ndim - 1))
        if weight is not None:
            grads.append((g * xhat).sum(axis=lead) if _need(weight) else None)
        if bias is not None:
            grads.append(g.sum(axis=lead) if _need(bias) else None)
        return grads

    return make_result("layer_norm", out.astype(x.dtype, copy=False), inputs, bw)


def causal_conv1d(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """Depthwise causal convolution over the time axis of ``x`` (B, L, E).

    ``kernel[e, j]`` weights ``x[t - j]``, so ``kernel[:, 0]`` is the tap on
    the current step and the sequence is left-padded with ``k - 1`` zeros.
    """
    if x.ndim != 3:
        raise ShapeError(f"causal_conv1d: expected (B, L, E) input, got {x.shape}")
    if kernel.ndim != 2 or kernel.shape[0] != x.shape[2]:
        raise ShapeError(f"causal_conv1d: kernel {kernel.shape} does not match channels of {x.shape}")
    E, k = kernel.shape
    if k < 1:
        raise ValueError("causal_conv1d: kernel width must be >= 1")
    if bias is not None and bias.shape != (E,):
        raise ShapeError(f"causal_conv1d: bias {bias.shape} does not match channels {E}")
    B, L, _ = x.shape
    xp = np.concatenate([np.zeros((B, k - 1, E), dtype=x.dtype), x.data], axis=1)
    w = kernel.data
    out = np.zeros_like(x.data)
    for j in range(k):
        out += w[:, j] * xp[:, k - 1 - j:k - 1 - j + L, :]
    if bias is not None:
        out += bias.data
    inputs = (x, kernel) if bias is None else (x, kernel, bias)

    def bw(g):
        gx = None
        if _need(x):
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, k - 1 - j:k - 1 - j + L, :] += g * w[:, j]
            gx = gxp[:, k - 1:, :]
        gk = None
        if _need(kernel):
            gk = np.empty_like(w)
            for j in range(k):
                gk[:, j] = (g * xp[:, k - 1 - j:k - 1 - j + L, :]).sum(axis=(0, 1))
        grads = [gx, gk]
        if bias is not None:
            grads.append(g.sum(axis=(0, 1)) if _need(bias) else None)
        return grads

    return make_result("causal_conv1d", out, inputs, bw)


# ---------------------------------------------------------------- shape ops

def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)
    return make_result("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes=None) -> Tensor:
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inv = np.argsort(axes)
    out = np.ascontiguousarray(a.data.transpose(axes))
    return make_result("transpose", out, (a,), lambda g: (g.transpose(inv),))


def getitem(a: Tensor, idx) -> Tensor:
    out = np.ascontiguousarray(a.data[idx])

    def bw(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return make_result("getitem", out, (a,), bw)


def take(a: Tensor, indices: np.ndarray, axis: int) -> Tensor:
    """Gather along ``axis`` with an integer index array of any shape."""
    axis = axis % a.ndim
    indices = np.asarray(indices)
    out = np.take(a.data, indices, axis=axis)

    def bw(g):
        ga = np.zeros_like(a.data)
        moved = np.moveaxis(ga, axis, 0)
        gm = np.moveaxis(g, list(range(axis, axis + indices.ndim)), list(range(indices.ndim)))
        np.add.at(moved, indices, gm)
        return (ga,)

    return make_result("take", out, (a,), bw)


def flip(a: Tensor, axis: int) -> Tensor:
    out = np.ascontiguousarray(np.flip(a.data, axis=axis))
    return make_result("flip", out, (a,), lambda g: (np.ascontiguousarray(np.flip(g, axis=axis)),))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    axis = axis % tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
                t.shape[i] != tensors[0].shape[i] for i in range(t.ndim) if i != axis):
            raise ShapeError(f"concat: shapes {tensors[0].shape} and {t.shape} disagree off axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        return np.split(g, bounds, axis=axis)

    return make_result("concat", out, tensors, bw)


def expand(a: Tensor, shape) -> Tensor:
    """Broadcast ``a`` to ``shape`` (leading dims or size-1 axes)."""
    shape = tuple(shape)
    out = np.ascontiguousarray(np.broadcast_to(a.data, shape))
    return make_result("expand", out, (a,), lambda g: (unbroadcast(g, a.shape),))


# ---------------------------------------------------------------- losses

def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    C = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise ValueError(f"cross_entropy: labels must lie in [0, {C}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    n = labels.shape[0]
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def bw(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (p * (g / n),)

    return make_result("cross_entropy", np.asarray(loss, dtype=logits.dtype), (logits,), bw)
