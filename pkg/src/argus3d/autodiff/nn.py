"""Small layer zoo on top of the tensor engine."""

from __future__ import annotations

import numpy as np

from . import functional as F
from .tensor import Module, Tensor


def _uniform(rng: np.random.Generator, shape, bound: float) -> Tensor:
    data = rng.uniform(-bound, bound, size=shape).astype(np.float32)
    return Tensor(data, requires_grad=True)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 bias: bool = True):
        bound = 1.0 / np.sqrt(in_dim)
        self.weight = _uniform(rng, (in_dim, out_dim), bound)
        self.bias = _uniform(rng, (out_dim,), bound) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        lead = x.shape[:-1]
        flat = x.reshape((-1, x.shape[-1])) if x.ndim != 2 else x
        out = F.matmul(flat, self.weight)
        if self.bias is not None:
            out = F.add(out, self.bias)
        if x.ndim != 2:
            out = out.reshape(lead + (self.weight.shape[1],))
        return out


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0, bias: bool = True):
        bound = 1.0 / np.sqrt(in_ch * kernel * kernel)
        self.weight = _uniform(rng, (out_ch, in_ch, kernel, kernel), bound)
        self.bias = _uniform(rng, (out_ch,), bound) if bias else None
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride,
                        padding=self.padding)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(dim, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(dim, dtype=np.float32), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return F.layernorm(x, self.gamma, self.beta, eps=self.eps)


class Embedding(Module):
    def __init__(self, count: int, dim: int, rng: np.random.Generator,
                 std: float = 0.02):
        data = (rng.standard_normal((count, dim)) * std).astype(np.float32)
        self.weight = Tensor(data, requires_grad=True)

    def __call__(self, ids) -> Tensor:
        return F.embedding(self.weight, ids)


class MLP(Module):
    """Stack of Linear layers with relu between them."""

    def __init__(self, dims: list[int], rng: np.random.Generator, bias: bool = True):
        self.layers = [Linear(a, b, rng, bias=bias) for a, b in zip(dims, dims[1:])]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = F.relu(x)
        return x
