import numpy as np
import pytest

from fedsel.bandits.mlp import (
    MlpParameters,
    MlpShapeError,
    init_mlp,
    mlp_forward,
    mlp_gradient,
    mse_loss_and_grad,
    train_nn,
)


def fd_gradient(params, x, channel, h=1e-4):
    theta = params.theta
    g = np.zeros_like(theta)
    for i in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (mlp_forward(params.with_theta(up), x)[channel] - mlp_forward(params.with_theta(dn), x)[channel]) / (2 * h)
    return g


def relative_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


def test_zero_last_layer_outputs_zero():
    p = init_mlp(5, (8, 4), 2, rng=0)
    p.layers[-1][:] = 0.0
    assert mlp_forward(p, np.ones(5)).tolist() == [0.0, 0.0]


def test_single_layer_hand_multiplied():
    w = np.array([[0.3, -0.7], [1.1, 0.4]])
    p = MlpParameters([w])
    # no hidden layer: m is the output width, 2
    out = mlp_forward(p, np.array([1.0, 0.0]))
    assert out == pytest.approx(np.sqrt(2) * np.array([0.3, 1.1]))


def test_zero_input_gives_zero_output():
    p = init_mlp(4, (8, 8), 2, rng=1)
    assert mlp_forward(p, np.zeros(4)).tolist() == [0.0, 0.0]


def test_dimension_mismatch():
    p = init_mlp(4, (8,), 2, rng=1)
    with pytest.raises(MlpShapeError):
        mlp_forward(p, np.zeros(3))


def test_broken_layer_chain():
    with pytest.raises(MlpShapeError):
        MlpParameters([np.zeros((4, 3)), np.zeros((2, 5))])


def test_batch_forward_matches_rows():
    p = init_mlp(3, (6, 5), 2, rng=2)
    X = np.random.default_rng(0).normal(size=(7, 3))
    assert np.allclose(mlp_forward(p, X), np.stack([mlp_forward(p, x) for x in X]))


@pytest.mark.parametrize("hidden", [(), (3,), (8, 4), (32, 16), (5, 5, 5)])
def test_gradient_length_is_p(hidden):
    p = init_mlp(4, hidden, 2, rng=0)
    assert mlp_gradient(p, np.ones(4)).size == p.p


def test_dead_first_layer_gives_zero_gradient_upstream():
    p = init_mlp(3, (4, 4), 2, rng=0)
    p.layers[0][:] = 0.0
    g = mlp_gradient(p, np.zeros(3))
    assert not np.any(g)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(42)
    for i in range(10):
        hidden = tuple(rng.integers(2, 9, size=rng.integers(0, 3)))
        d = int(rng.integers(2, 6))
        p = init_mlp(d, hidden, 2, rng=rng)
        x = rng.normal(size=d)
        for ch in (0, 1):
            assert relative_error(mlp_gradient(p, x, ch), fd_gradient(p, x, ch)) <= 1e-4


def test_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    p = init_mlp(3, (5, 4), 2, rng=rng)
    X, Y = rng.normal(size=(6, 3)), rng.normal(size=(6, 2))
    _, grads = mse_loss_and_grad(p, X, Y)
    analytic = np.concatenate([g.reshape(-1) for g in grads])
    theta = p.theta
    fd = np.zeros_like(theta)
    for i in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[i] += 1e-5
        dn[i] -= 1e-5
        fd[i] = (mse_loss_and_grad(p.with_theta(up), X, Y)[0] - mse_loss_and_grad(p.with_theta(dn), X, Y)[0]) / 2e-5
    assert relative_error(analytic, fd) <= 1e-4


def test_zero_learning_rate_leaves_theta():
    p = init_mlp(3, (8, 4), 2, rng=0)
    X, Y = np.ones((4, 3)), np.ones((4, 2))
    out, hist = train_nn(p, X, Y, steps=5, lr=0.0)
    assert np.array_equal(out.theta, p.theta) and len(hist) == 5


def test_empty_data_is_noop():
    p = init_mlp(3, (8,), 2, rng=0)
    out, hist = train_nn(p, np.zeros((0, 3)), np.zeros((0, 2)))
    assert hist == [] and np.array_equal(out.theta, p.theta)


def test_small_lr_descent_is_monotone():
    rng = np.random.default_rng(5)
    p = init_mlp(4, (16, 8), 2, rng=rng)
    X = np.abs(rng.normal(size=(20, 4)))
    Y = np.abs(rng.normal(size=(20, 2)))
    _, hist = train_nn(p, X, Y, steps=100, lr=1e-3)
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))


def test_training_does_not_mutate_input():
    p = init_mlp(3, (8,), 2, rng=0)
    before = p.theta.copy()
    train_nn(p, np.ones((3, 3)), np.zeros((3, 2)), steps=10)
    assert np.array_equal(p.theta, before)
