"""Central finite-difference gradient verification.

Checks run the forward twice per probed coordinate at x +- eps and compare
the slope against the taped gradient. Running in float64 with eps=1e-4
keeps the truncation error around 1e-8, so a relative error above 1e-5
points at a wrong backward rule rather than at rounding.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def finite_difference_grad(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    eps: float = 1e-4,
    coords: Sequence[tuple] | None = None,
) -> np.ndarray:
    """Central differences of a scalar function at x.

    When `coords` is given, only those flat indices are probed and all other
    entries of the returned array are NaN.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.full(x.size, np.nan)
    flat_coords = range(x.size) if coords is None else coords
    xf = x.reshape(-1).copy()
    for i in flat_coords:
        orig = xf[i]
        xf[i] = orig + eps
        fp = f(xf.reshape(x.shape))
        xf[i] = orig - eps
        fm = f(xf.reshape(x.shape))
        xf[i] = orig
        g[i] = (fp - fm) / (2.0 * eps)
    return g.reshape(x.shape)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max absolute deviation, normalized by the gradient's own scale."""
    mask = np.isfinite(numeric)
    if not mask.any():
        return 0.0
    a = np.asarray(analytic, dtype=np.float64)[mask]
    n = np.asarray(numeric, dtype=np.float64)[mask]
    scale = max(1.0, float(np.abs(n).max()), float(np.abs(a).max()))
    return float(np.abs(a - n).max() / scale)


def check_gradients(
    fn: Callable[[list[Tensor]], Tensor],
    arrays: list[np.ndarray],
    eps: float = 1e-4,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare taped gradients of fn against central differences.

    fn maps a list of leaf Tensors to a scalar Tensor. arrays supply the
    leaf values (dtype is preserved, so pass float64 for tight tolerances).
    Returns the worst relative error across all inputs. With max_coords,
    a random subset of coordinates per input is probed.
    """
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = fn(leaves)
    loss.backward()
    worst = 0.0
    for idx, leaf in enumerate(leaves):
        coords = None
        if max_coords is not None and leaf.size > max_coords:
            gen = rng if rng is not None else np.random.default_rng(0)
            coords = gen.choice(leaf.size, size=max_coords, replace=False).tolist()

        def scalar_fn(x, _idx=idx):
            probe = [Tensor(a.data.copy()) for a in leaves]
            probe[_idx] = Tensor(np.asarray(x, dtype=leaves[_idx].dtype))
            return fn(probe).item()

        fd = finite_difference_grad(scalar_fn, leaf.data, eps=eps, coords=coords)
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        worst = max(worst, relative_error(analytic, fd))
    return worst
