import math

import numpy as np
import pytest

from argus3d.autodiff import (
    ContractError,
    DimensionError,
    NumericError,
    Tensor,
    functional as F,
    no_grad,
    topo_order,
)

RNG = np.random.default_rng(7)


def test_matmul_identity():
    m = RNG.random((3, 3)).astype(np.float32)
    out = F.matmul(Tensor(np.eye(3, dtype=np.float32)), Tensor(m))
    np.testing.assert_allclose(out.data, m, rtol=1e-6)


def test_matmul_matches_triple_loop():
    a = RNG.random((4, 5)).astype(np.float32)
    b = RNG.random((5, 3)).astype(np.float32)
    expect = np.zeros((4, 3), dtype=np.float64)
    for i in range(4):
        for j in range(3):
            for k in range(5):
                expect[i, j] += float(a[i, k]) * float(b[k, j])
    out = F.matmul(Tensor(a), Tensor(b))
    np.testing.assert_allclose(out.data, expect, atol=1e-6)


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        F.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))


def test_matmul_backward_rule():
    a = Tensor(RNG.random((4, 5)), requires_grad=True)
    b = Tensor(RNG.random((5, 3)), requires_grad=True)
    out = F.matmul(a, b)
    F.sum(out).backward()
    g = np.ones((4, 3))
    np.testing.assert_allclose(a.grad, g @ b.data.T, rtol=1e-10)
    np.testing.assert_allclose(b.grad, a.data.T @ g, rtol=1e-10)


def test_softmax_constant_is_uniform():
    out = F.softmax(Tensor(np.full((2, 5), 3.25)))
    np.testing.assert_allclose(out.data, 0.2, rtol=1e-12)


def test_bce_logit_zero_target_one_is_ln2():
    loss = F.binary_cross_entropy_with_logits(
        Tensor(np.zeros(4)), np.ones(4)
    )
    assert loss.item() == pytest.approx(math.log(2.0), rel=1e-12)


def test_conv2d_one_by_one_identity():
    x = Tensor(RNG.random((2, 3, 5, 5)).astype(np.float32))
    w = np.zeros((3, 3, 1, 1), dtype=np.float32)
    for c in range(3):
        w[c, c, 0, 0] = 1.0
    out = F.conv2d(x, Tensor(w))
    np.testing.assert_allclose(out.data, x.data, rtol=1e-6)


def test_conv2d_impulse_response():
    x = np.zeros((1, 5, 5), dtype=np.float32)
    x[0, 2, 2] = 1.0
    w = np.ones((1, 1, 3, 3), dtype=np.float32)
    out = F.conv2d(Tensor(x), Tensor(w), padding=1)
    np.testing.assert_allclose(out.data[0, 1:4, 1:4], 1.0)
    assert out.data.sum() == pytest.approx(9.0)


def test_conv2d_channel_mismatch():
    with pytest.raises(DimensionError):
        F.conv2d(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))


def test_conv2d_even_kernel_rejected():
    with pytest.raises(DimensionError):
        F.conv2d(Tensor(np.zeros((1, 4, 4))), Tensor(np.zeros((1, 1, 2, 2))))


def test_bilinear_sample_cell_center():
    plane = RNG.random((4, 8, 8)).astype(np.float32)
    uv = np.array([[(3 + 0.5) / 8, (5 + 0.5) / 8]])
    out = F.bilinear_sample(Tensor(plane), uv)
    np.testing.assert_allclose(out.data[0], plane[:, 3, 5], rtol=1e-6)


def test_bilinear_sample_midpoint_mean():
    plane = RNG.random((2, 8, 8)).astype(np.float32)
    uv = np.array([[4.0 / 8, (2 + 0.5) / 8]])  # midway between rows 3 and 4
    out = F.bilinear_sample(Tensor(plane), uv)
    expect = 0.5 * (plane[:, 3, 2] + plane[:, 4, 2])
    np.testing.assert_allclose(out.data[0], expect, rtol=1e-5)


def test_bilinear_sample_out_of_range_warns_in_debug():
    plane = Tensor(np.zeros((1, 4, 4)))
    with pytest.warns(UserWarning):
        F.bilinear_sample(plane, np.array([[1.5, 0.5]]), debug=True)


def test_scatter_mean_permutation():
    feats = RNG.random((4, 3)).astype(np.float32)
    ids = np.array([5, 0, 3, 2])
    out = F.scatter_mean(Tensor(feats), ids, r=4)
    for row, cid in zip(feats, ids):
        np.testing.assert_allclose(out.data[:, cid // 4, cid % 4], row, rtol=1e-6)


def test_scatter_mean_of_equal_features():
    row = RNG.random(3).astype(np.float32)
    feats = np.stack([row, row])
    out = F.scatter_mean(Tensor(feats), np.array([7, 7]), r=4)
    np.testing.assert_allclose(out.data[:, 1, 3], row, rtol=1e-6)
    assert np.count_nonzero(out.data) == np.count_nonzero(row) * 1


def test_backward_requires_scalar():
    t = Tensor(np.zeros((2, 2)), requires_grad=True)
    with pytest.raises(ContractError):
        (t + t).backward()


def test_backward_accumulates_without_zeroing():
    x = Tensor(np.array([2.0]), requires_grad=True)
    loss = F.sum(x * x)
    loss.backward()
    first = x.grad.copy()
    loss2 = F.sum(x * x)
    loss2.backward()
    np.testing.assert_allclose(x.grad, 2 * first)


def test_backward_visits_each_node_once():
    x = Tensor(RNG.random(4), requires_grad=True)
    y = x * x
    z = y + y  # diamond: y reachable along two paths
    loss = F.sum(z * y)
    calls: dict[int, int] = {}
    for node in topo_order(loss):
        if node._backward is None:
            continue
        orig = node._backward

        def counted(out, _orig=orig, _key=id(node)):
            calls[_key] = calls.get(_key, 0) + 1
            _orig(out)

        node._backward = counted
    loss.backward()
    assert calls and all(v == 1 for v in calls.values())


def test_nan_in_forward_raises_with_op_name():
    bad = Tensor(np.array([-1.0]))
    with pytest.raises(NumericError, match="log"):
        F.log(bad)


def test_no_grad_skips_taping():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = x * x
    assert y._backward is None and not y.requires_grad


def test_add_bias_broadcast_only():
    x = Tensor(RNG.random((3, 4)))
    bias = Tensor(RNG.random(4))
    out = F.add(x, bias)
    np.testing.assert_allclose(out.data, x.data + bias.data, rtol=1e-6)
    with pytest.raises(DimensionError):
        F.add(x, Tensor(RNG.random(3)))
    with pytest.raises(DimensionError):
        F.mul(x, Tensor(RNG.random(4)))  # bias pattern is add-only


def test_determinism_same_inputs_same_outputs():
    a = RNG.random((6, 6)).astype(np.float32)
    r1 = F.softmax(F.matmul(Tensor(a), Tensor(a))).data
    r2 = F.softmax(F.matmul(Tensor(a), Tensor(a))).data
    np.testing.assert_array_equal(r1, r2)


def test_embedding_lookup_and_grad():
    w = Tensor(RNG.random((5, 3)), requires_grad=True)
    out = F.embedding(w, np.array([1, 1, 4]))
    np.testing.assert_allclose(out.data[0], w.data[1])
    F.sum(out).backward()
    assert w.grad[1].sum() == pytest.approx(6.0)  # two lookups of row 1
    assert w.grad[0].sum() == 0.0


def test_concat_and_narrow_roundtrip():
    a = Tensor(RNG.random((2, 3)), requires_grad=True)
    b = Tensor(RNG.random((2, 5)), requires_grad=True)
    cat = F.concat([a, b], axis=1)
    back = F.narrow(cat, 1, 0, 3)
    np.testing.assert_allclose(back.data, a.data)
    F.sum(back).backward()
    np.testing.assert_allclose(a.grad, np.ones((2, 3)))
    np.testing.assert_allclose(b.grad, np.zeros((2, 5)))
