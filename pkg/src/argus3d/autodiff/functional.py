"""Differentiable primitives over Tensor.

Broadcasting is deliberately restricted: binary ops take equal shapes, a
scalar on either side, or (for add) a trailing-dimension bias vector.
Anything else must go through an explicit reshape, which keeps every
backward rule auditable.
"""

from __future__ import annotations

import warnings

import numpy as np

from .tensor import (
    ContractError,
    DimensionError,
    Tensor,
    as_tensor,
    make_node,
)


def _is_scalar(t: Tensor) -> bool:
    return t.data.size == 1 and t.data.ndim <= 1


# -- elementwise binary ops -----------------------------------------------


def _binary_mode(a: Tensor, b: Tensor, op: str, allow_bias: bool = False) -> str:
    if a.shape == b.shape:
        return "same"
    if _is_scalar(b):
        return "scalar_b"
    if _is_scalar(a):
        return "scalar_a"
    if allow_bias and b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        return "bias_b"
    raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape` (inverse of scalar/bias broadcast)."""
    if g.shape == shape:
        return g
    if len(shape) == 0 or (len(shape) == 1 and shape[0] == 1 and g.size > 1):
        return g.sum().reshape(shape)
    axes = tuple(range(g.ndim - len(shape)))
    return g.sum(axis=axes).reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_mode(a, b, "add", allow_bias=True)
    data = a.data + b.data

    def backward(out):
        if a.requires_grad:
            a.accumulate_grad(_reduce_to(out.grad, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_reduce_to(out.grad, b.shape))

    return make_node(data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_mode(a, b, "sub")
    data = a.data - b.data

    def backward(out):
        if a.requires_grad:
            a.accumulate_grad(_reduce_to(out.grad, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_reduce_to(-out.grad, b.shape))

    return make_node(data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_mode(a, b, "mul")
    data = a.data * b.data

    def backward(out):
        if a.requires_grad:
            a.accumulate_grad(_reduce_to(out.grad * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_reduce_to(out.grad * a.data, b.shape))

    return make_node(data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_mode(a, b, "div")
    data = a.data / b.data

    def backward(out):
        if a.requires_grad:
            a.accumulate_grad(_reduce_to(out.grad / b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_reduce_to(-out.grad * a.data / (b.data * b.data), b.shape))

    return make_node(data, (a, b), backward, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)

    def backward(out):
        if a.requires_grad:
            a.accumulate_grad(-out.grad)

    return make_node(-a.data, (a,), backward, "neg")


# -- elementwise unary ops -------------------------------------------------


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0)

    def backward(out):
        if a.requires_grad:
            a.accumulate_grad(out.grad * (a.data > 0))

    return make_node(data, (a,), backward, "relu")


def sigmoid(a: Tensor) -> Tensor:
    # Stable in both tails: never exponentiates a large positive value.
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(out):
        if a.requires_grad:
            a.accumulate_grad(out.grad * data * (1.0 - data))

    return make_node(data, (a,), backward, "sigmoid")


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(out):
        if a.requires_grad:
            a.accumulate_grad(out.grad * (1.0 - data * data))

    return make_node(data, (a,), backward, "tanh")


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def backward(out):
        if a.requires_grad:
            a.accumulate_grad(out.grad * data)

    return make_node(data, (a,), backward, "exp")


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def backward(out):
        if a.requires_grad:
            a.accumulate_grad(out.grad / a.data)

    return make_node(data, (a,), backward, "log")


# -- shape ops --------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    data = a.data.reshape(shape)

    def backward(out):
        if a.requires_grad:
            a.accumulate_grad(out.grad.reshape(a.shape))

    return make_node(data, (a,), backward, "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inv = np.argsort(axes)
    data = a.data.transpose(axes)

    def backward(out):
        if a.requires_grad:
            a.accumulate_grad(out.grad.transpose(inv))

    return make_node(data, (a,), backward, "transpose")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(out):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * out.grad.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate_grad(out.grad[tuple(idx)])

    return make_node(data, tensors, backward, "concat")


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis."""
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    data = a.data[idx]

    def backward(out):
        if a.requires_grad:
            g = np.zeros_like(a.data)
            g[idx] = out.grad
            a.accumulate_grad(g)

    return make_node(data, (a,), backward, "narrow")


# -- reductions --------------------------------------------------------------


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(out):
        if a.requires_grad:
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a.accumulate_grad(np.broadcast_to(g, a.shape).copy())

    return make_node(data, (a,), backward, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else a.data.shape[axis]

    def backward(out):
        if a.requires_grad:
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a.accumulate_grad(np.broadcast_to(g, a.shape) / count)

    return make_node(data, (a,), backward, "mean")


# -- linear algebra -----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product, or batched product when leading dims match."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-d operands, got {a.shape} x {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dims disagree: {a.shape} x {b.shape}")
    if a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul batch dims disagree: {a.shape} x {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward(out):
        if a.requires_grad:
            a.accumulate_grad(np.matmul(out.grad, b.data.swapaxes(-1, -2)))
        if b.requires_grad:
            b.accumulate_grad(np.matmul(a.data.swapaxes(-1, -2), out.grad))

    return make_node(data, (a, b), backward, "matmul")


# -- normalization and softmax -------------------------------------------------


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError("layernorm gamma/beta must match the last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat * gamma.data + beta.data

    def backward(out):
        g = out.grad
        if gamma.requires_grad:
            gamma.accumulate_grad((g * xhat).reshape(-1, d).sum(axis=0))
        if beta.requires_grad:
            beta.accumulate_grad(g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            gh = g * gamma.data
            m1 = gh.mean(axis=-1, keepdims=True)
            m2 = (gh * xhat).mean(axis=-1, keepdims=True)
            x.accumulate_grad(inv * (gh - m1 - xhat * m2))

    return make_node(data, (x, gamma, beta), backward, "layernorm")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(out):
        if x.requires_grad:
            g = out.grad
            dot = (g * data).sum(axis=axis, keepdims=True)
            x.accumulate_grad(data * (g - dot))

    return make_node(data, (x,), backward, "softmax")


# -- lookups and scatters --------------------------------------------------------


def embedding(weight: Tensor, ids) -> Tensor:
    """Row lookup: out[..., :] = weight[ids[...], :]."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ContractError("embedding ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise ContractError("embedding id out of range")
    data = weight.data[ids]

    def backward(out):
        if weight.requires_grad:
            dw = np.zeros_like(weight.data)
            np.add.at(dw, ids.reshape(-1), out.grad.reshape(-1, weight.shape[1]))
            weight.accumulate_grad(dw)

    return make_node(data, (weight,), backward, "embedding")


def scatter_mean(features: Tensor, cell_ids, r: int) -> Tensor:
    """Average features into an r x r grid by cell id; empty cells are zero.

    features: (n, c); cell_ids: n ints in [0, r*r). Returns (c, r, r).
    """
    ids = np.asarray(cell_ids)
    n, c = features.shape
    if ids.shape != (n,):
        raise DimensionError("cell_ids must be one id per feature row")
    if ids.size and (ids.min() < 0 or ids.max() >= r * r):
        raise ContractError("cell id out of range")
    counts = np.bincount(ids, minlength=r * r)
    sums = np.zeros((r * r, c), dtype=features.dtype)
    for ci in range(c):
        sums[:, ci] = np.bincount(ids, weights=features.data[:, ci], minlength=r * r)
    denom = np.maximum(counts, 1).astype(features.dtype)
    data = (sums / denom[:, None]).T.reshape(c, r, r)

    def backward(out):
        if features.requires_grad:
            g = out.grad.reshape(c, r * r).T  # (r*r, c)
            features.accumulate_grad((g / denom[:, None])[ids])

    return make_node(data, (features,), backward, "scatter_mean")


def bilinear_sample(plane: Tensor, uv, debug: bool = False) -> Tensor:
    """Sample a (c, r, r) grid at q points with coordinates in [0, 1]^2.

    Grid values live at cell centers ((i + 0.5) / r). uv is treated as a
    constant; only the plane receives gradient. Out-of-range coordinates
    are clamped (warned about when debug is set).
    """
    uv = np.asarray(uv, dtype=plane.dtype)
    if uv.ndim != 2 or uv.shape[1] != 2:
        raise DimensionError(f"uv must be (q, 2), got {uv.shape}")
    c, r, r2 = plane.shape
    if r != r2:
        raise DimensionError("plane must be square")
    if debug and uv.size and (uv.min() < 0.0 or uv.max() > 1.0):
        warnings.warn("bilinear_sample: uv outside [0,1], clamping", stacklevel=2)
    g = np.clip(uv, 0.0, 1.0) * r - 0.5
    g = np.clip(g, 0.0, r - 1.0)
    i0 = np.floor(g).astype(np.int64)
    i0 = np.minimum(i0, r - 2) if r > 1 else i0
    i1 = np.minimum(i0 + 1, r - 1)
    f = g - i0
    w00 = (1 - f[:, 0]) * (1 - f[:, 1])
    w01 = (1 - f[:, 0]) * f[:, 1]
    w10 = f[:, 0] * (1 - f[:, 1])
    w11 = f[:, 0] * f[:, 1]
    flat = plane.data.reshape(c, r * r)
    k00 = i0[:, 0] * r + i0[:, 1]
    k01 = i0[:, 0] * r + i1[:, 1]
    k10 = i1[:, 0] * r + i0[:, 1]
    k11 = i1[:, 0] * r + i1[:, 1]
    data = (
        flat[:, k00] * w00 + flat[:, k01] * w01 + flat[:, k10] * w10 + flat[:, k11] * w11
    ).T  # (q, c)

    def backward(out):
        if plane.requires_grad:
            dflat = np.zeros((c, r * r), dtype=plane.dtype)
            for keys, w in ((k00, w00), (k01, w01), (k10, w10), (k11, w11)):
                wg = out.grad * w[:, None]  # (q, c)
                for ci in range(c):
                    dflat[ci] += np.bincount(keys, weights=wg[:, ci], minlength=r * r)
            plane.accumulate_grad(dflat.reshape(c, r, r))

    return make_node(data, (plane,), backward, "bilinear_sample")


# -- convolution ------------------------------------------------------------------


def _conv_cols(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """im2col: padded (n, c, hp, wp) -> (n, ho*wo, c*k*k)."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (n, c, ho, wo, k, k)
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(xp.shape[0], ho * wo, -1)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation. x: (n, c_in, h, w) or (c_in, h, w); weight:
    (c_out, c_in, k, k); square odd kernels only."""
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4:
        raise DimensionError(f"conv2d input must be 3-d or 4-d, got {x.shape}")
    n, cin, h, w = xd.shape
    cout, cin_w, k, k2 = weight.shape
    if k != k2 or k % 2 != 1:
        raise DimensionError("conv2d kernel must be square with odd size")
    if cin != cin_w:
        raise DimensionError(f"conv2d channels disagree: input {cin}, weight {cin_w}")
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError("conv2d output would be empty")
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _conv_cols(xp, k, stride, ho, wo)  # (n, ho*wo, cin*k*k)
    wf = weight.data.reshape(cout, -1)
    out = np.matmul(cols, wf.T)  # (n, ho*wo, cout)
    if bias is not None:
        out = out + bias.data
    data = out.transpose(0, 2, 1).reshape(n, cout, ho, wo)
    if squeeze:
        data = data[0]

    def backward(outn):
        g = outn.grad
        if squeeze:
            g = g[None]
        g2 = g.reshape(n, cout, ho * wo).transpose(0, 2, 1)  # (n, ho*wo, cout)
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(g2.reshape(-1, cout).sum(axis=0))
        if weight.requires_grad:
            dw = np.matmul(
                g2.reshape(-1, cout).T, cols.reshape(-1, cols.shape[-1])
            )
            weight.accumulate_grad(dw.reshape(weight.shape))
        if x.requires_grad:
            dcols = np.matmul(g2, wf)  # (n, ho*wo, cin*k*k)
            dcols = dcols.reshape(n, ho, wo, cin, k, k).transpose(0, 3, 1, 2, 4, 5)
            dxp = np.zeros_like(xp)
            for ki in range(k):
                for kj in range(k):
                    dxp[:, :, ki:ki + ho * stride:stride, kj:kj + wo * stride:stride] += (
                        dcols[:, :, :, :, ki, kj]
                    )
            dx = dxp[:, :, padding:padding + h, padding:padding + w]
            x.accumulate_grad(dx[0] if squeeze else dx)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(data, parents, backward, "conv2d")


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbor spatial doubling of (n, c, h, w)."""
    if x.ndim != 4:
        raise DimensionError(f"upsample2x expects 4-d input, got {x.shape}")
    data = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def backward(out):
        if x.requires_grad:
            n, c, h2, w2 = out.grad.shape
            g = out.grad.reshape(n, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))
            x.accumulate_grad(g)

    return make_node(data, (x,), backward, "upsample2x")


# -- losses ---------------------------------------------------------------------------


def cross_entropy_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean NLL of integer targets under a row-softmax, computed stably."""
    t = np.asarray(targets)
    if logits.ndim != 2:
        raise DimensionError(f"logits must be (n, k), got {logits.shape}")
    n, k = logits.shape
    if t.shape != (n,) or not np.issubdtype(t.dtype, np.integer):
        raise ContractError("targets must be n integer class ids")
    if t.size and (t.min() < 0 or t.max() >= k):
        raise ContractError("target id out of range")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    data = np.asarray((lse - z[np.arange(n), t]).mean(), dtype=logits.dtype)

    def backward(out):
        if logits.requires_grad:
            p = np.exp(z)
            p /= p.sum(axis=1, keepdims=True)
            p[np.arange(n), t] -= 1.0
            logits.accumulate_grad(out.grad * p / n)

    return make_node(data, (logits,), backward, "cross_entropy_with_logits")


def binary_cross_entropy_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean BCE from logits: max(x,0) - x*y + log1p(exp(-|x|))."""
    y = np.asarray(targets, dtype=logits.dtype)
    if y.shape != logits.shape:
        raise DimensionError(
            f"targets shape {y.shape} must match logits {logits.shape}"
        )
    x = logits.data
    per = np.maximum(x, 0) - x * y + np.log1p(np.exp(-np.abs(x)))
    data = np.asarray(per.mean(), dtype=logits.dtype)

    def backward(out):
        if logits.requires_grad:
            s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                         np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
            logits.accumulate_grad(out.grad * (s - y) / x.size)

    return make_node(data, (logits,), backward, "binary_cross_entropy_with_logits")
