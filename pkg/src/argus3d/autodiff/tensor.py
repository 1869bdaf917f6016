"""Dense tensor with a taped reverse-mode gradient graph.

Everything is eager: each op computes its numpy result immediately and
records a backward closure. float32 is the working precision; building
tensors from float64 arrays keeps float64, which is what the gradient
checker uses to separate algorithmic error from rounding.
"""

from __future__ import annotations

import contextlib
from typing import Iterable, Iterator

import numpy as np

DEFAULT_DTYPE = np.float32

_FLOAT_DTYPES = (np.float32, np.float64)


class NumericError(RuntimeError):
    """A forward or backward pass produced NaN or Inf."""


class DimensionError(ValueError):
    """Operand shapes violate an op's contract."""


class ContractError(ValueError):
    """An op precondition other than shape was violated."""


_grad_enabled = True
_numeric_checks = True


@contextlib.contextmanager
def no_grad():
    """Disable taping inside the block. Ops return detached results."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextlib.contextmanager
def numeric_checks(enabled: bool = True):
    """Toggle the per-op NaN/Inf scan (on by default)."""
    global _numeric_checks
    prev = _numeric_checks
    _numeric_checks = enabled
    try:
        yield
    finally:
        _numeric_checks = prev


def grad_enabled() -> bool:
    return _grad_enabled


def check_finite(arr: np.ndarray, op: str) -> None:
    if _numeric_checks and not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in '{op}'")


class Tensor:
    """N-d float array plus an optional gradient accumulator.

    ``_parents`` and ``_backward`` form the tape: ``_backward(out)`` reads
    ``out.grad`` and adds each parent's contribution into ``parent.grad``.
    Leaf tensors have no parents.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._op = "leaf"

    # -- introspection ------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self._op}{flag})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    # -- graph control ------------------------------------------------

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every reachable leaf.

        Nodes are visited once each, in reverse topological order. Calling
        twice without zeroing grads accumulates.
        """
        if self.data.size != 1:
            raise ContractError(
                f"backward() needs a scalar loss, got shape {self.shape}"
            )
        order = topo_order(self)
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node)
                if _numeric_checks:
                    for p in node._parents:
                        if p.requires_grad and p.grad is not None:
                            check_finite(p.grad, f"{node._op}.backward")

    # -- operator sugar (implemented in functional.py) -----------------

    def __add__(self, other):
        from . import functional as F

        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F

        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F

        return F.sub(other, self)

    def __mul__(self, other):
        from . import functional as F

        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import functional as F

        return F.div(self, other)

    def __neg__(self):
        from . import functional as F

        return F.neg(self)

    def __matmul__(self, other):
        from . import functional as F

        return F.matmul(self, other)

    def reshape(self, *shape):
        from . import functional as F

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes):
        from . import functional as F

        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return F.transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        from . import functional as F

        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import functional as F

        return F.mean(self, axis=axis, keepdims=keepdims)


def make_node(
    data: np.ndarray,
    parents: Iterable[Tensor],
    backward,
    op: str,
) -> Tensor:
    """Wrap an op result. Tapes it only if grad is enabled and needed."""
    check_finite(data, op)
    out = Tensor(data)
    parents = tuple(parents)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        out._op = op
    return out


def topo_order(root: Tensor) -> list[Tensor]:
    """Iterative post-order over the tape; each node appears exactly once."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Module:
    """Minimal parameter container: attributes that are Tensors, Modules,
    or lists of Modules are discovered by name."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name in sorted(vars(self)):
            attr = getattr(self, name)
            full = f"{prefix}{name}"
            if isinstance(attr, Tensor) and attr.requires_grad:
                yield full, attr
            elif isinstance(attr, Module):
                yield from attr.named_parameters(f"{full}.")
            elif isinstance(attr, (list, tuple)):
                for i, item in enumerate(attr):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{full}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def to_dtype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                raise DimensionError(
                    f"parameter '{name}': expected {p.data.shape}, got {arr.shape}"
                )
            p.data = arr.astype(p.data.dtype)
            p.grad = None

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())
