import numpy as np
import pytest

from argus3d.autodiff import Adam, OptimState, Tensor, adam_step, functional as F


def test_zero_gradient_leaves_params_unchanged():
    p = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    state = OptimState(lr=0.1)
    adam_step([p], [np.zeros(3)], state)
    np.testing.assert_array_equal(p.data, [1.0, -2.0, 3.0])


def test_single_step_magnitude_is_lr():
    # With constant gradient g, bias-corrected m_hat = g and v_hat = g^2,
    # so the first update is lr * g / (|g| + eps) ~= lr * sign(g).
    p = Tensor(np.array([0.0, 0.0]), requires_grad=True)
    state = OptimState(lr=1e-3)
    g = np.array([0.37, -5.1])
    adam_step([p], [g], state)
    np.testing.assert_allclose(np.abs(p.data), 1e-3, rtol=1e-5)
    assert np.sign(p.data[0]) == -1 and np.sign(p.data[1]) == 1


def test_converges_on_quadratic():
    x = Tensor(np.array([5.0]), requires_grad=True)
    opt = Adam([x], lr=0.1)
    for _ in range(200):
        opt.zero_grad()
        loss = F.sum(x * x)
        loss.backward()
        opt.step()
    assert abs(x.data[0]) < 0.1


def test_step_counter_increases():
    p = Tensor(np.ones(2), requires_grad=True)
    opt = Adam([p])
    for i in range(3):
        p.grad = np.ones(2)
        opt.step()
        assert opt.state.step_count == i + 1


def test_moment_shapes_match_params():
    p = Tensor(np.ones((2, 3)), requires_grad=True)
    opt = Adam([p])
    p.grad = np.ones((2, 3))
    opt.step()
    assert opt.state.m[0].shape == (2, 3)
    assert opt.state.v[0].shape == (2, 3)
    with pytest.raises(Exception):
        adam_step([p], [np.ones(5)], opt.state)
