import math

import numpy as np
import pytest

from conftest import fd_param_grads, random_small_net, rel_err
from synthpop import nn_core
from synthpop.errors import DivergenceError, EncodingError, ShapeError
from synthpop.nn_core import DenseLayer, Mlp


def layer(w, b, act, blocks=None):
    return DenseLayer(np.asarray(w, float), np.asarray(b, float), act, blocks)


def test_forward_identity_linear():
    mlp = Mlp([layer([[1, 0], [0, 1]], [0, 0], "linear")])
    acts = nn_core.forward(mlp, [[1.0, 2.0]])
    assert np.allclose(acts[-1], [[1.0, 2.0]])


def test_forward_sigmoid_of_zero():
    mlp = Mlp([layer([[0.0, 0.0]], [0.0], "sigmoid")])
    acts = nn_core.forward(mlp, [[3.7, -120.0]])
    assert np.allclose(acts[-1], [[0.5]])


def test_forward_softmax_hand_value():
    # pre-activation [ln 3, 0] within a single block of 2
    mlp = Mlp([layer([[1.0], [0.0]], [0.0, 0.0], "softmax_blocks", (2,))])
    acts = nn_core.forward(mlp, [[math.log(3.0)]])
    assert np.allclose(acts[-1], [[0.75, 0.25]], atol=1e-9)


def test_forward_shape_error():
    mlp = Mlp([layer([[1.0, 0.0]], [0.0], "linear")])
    with pytest.raises(ShapeError):
        nn_core.forward(mlp, [[1.0, 2.0, 3.0]])


def test_softmax_blocks_rows_sum_to_one():
    rng = np.random.default_rng(7)
    blocks = (3, 1, 4)
    z = rng.standard_normal((20, 8)) * 30.0
    p = nn_core.softmax_blocks(z, blocks)
    assert np.all(p >= 0.0) and np.all(p <= 1.0)
    lo = 0
    for b in blocks:
        assert np.allclose(p[:, lo : lo + b].sum(axis=1), 1.0, atol=1e-9)
        lo += b


def test_backward_linear_chain_rule():
    mlp = Mlp([layer([[2.0]], [0.0], "linear")])
    acts = nn_core.forward(mlp, [[3.0]])
    grads, dx = nn_core.backward(mlp, acts, [[1.0]])
    assert grads[0][0] == pytest.approx(3.0)
    assert grads[0][1] == pytest.approx(1.0)
    assert dx == pytest.approx(2.0)


def test_backward_zero_gradient_gives_zero():
    rng = np.random.default_rng(3)
    mlp = nn_core.build_mlp([3, 4, 2], "tanh", "linear", rng)
    acts = nn_core.forward(mlp, rng.standard_normal((5, 3)))
    grads, dx = nn_core.backward(mlp, acts, np.zeros((5, 2)))
    for gw, gb in grads:
        assert not gw.any() and not gb.any()
    assert not dx.any()


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(42)
    for _ in range(12):
        mlp, batch, targets = random_small_net(rng)
        if targets is not None:
            blocks = mlp.layers[-1].blocks

            def loss_fn():
                probs = nn_core.forward(mlp, batch)[-1]
                return nn_core.cross_entropy_blocks(probs, targets, blocks)[0]

            acts = nn_core.forward(mlp, batch)
            _, d_logits = nn_core.cross_entropy_blocks(acts[-1], targets, blocks)
            grads, _ = nn_core.backward(mlp, acts, d_logits, from_logits=True)
        else:
            coeff = rng.standard_normal((batch.shape[0], mlp.out_dim))

            def loss_fn():
                return float((coeff * nn_core.forward(mlp, batch)[-1]).sum())

            acts = nn_core.forward(mlp, batch)
            grads, _ = nn_core.backward(mlp, acts, coeff)
        fd = fd_param_grads(mlp, loss_fn)
        for (gw, gb), (fw, fb) in zip(grads, fd):
            assert rel_err(gw, fw) < 1e-4
            assert rel_err(gb, fb) < 1e-4


def test_backward_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(9)
    mlp = nn_core.build_mlp([4, 5, 3], "tanh", "sigmoid", rng)
    batch = rng.standard_normal((2, 4))
    coeff = rng.standard_normal((2, 3))
    acts = nn_core.forward(mlp, batch)
    _, dx = nn_core.backward(mlp, acts, coeff)
    fd = np.zeros_like(batch)
    for i in range(batch.shape[0]):
        for j in range(batch.shape[1]):
            old = batch[i, j]
            h = 1e-6
            batch[i, j] = old + h
            lp = float((coeff * nn_core.forward(mlp, batch)[-1]).sum())
            batch[i, j] = old - h
            lm = float((coeff * nn_core.forward(mlp, batch)[-1]).sum())
            batch[i, j] = old
            fd[i, j] = (lp - lm) / (2 * h)
    assert rel_err(dx, fd) < 1e-4


def test_adam_first_step_closed_form():
    mlp = Mlp([layer([[1.0]], [1.0], "linear")])
    state = nn_core.init_adam(mlp, learning_rate=0.001)
    grads = [(np.array([[1.0]]), np.array([1.0]))]
    updated, state2 = nn_core.adam_step(mlp, grads, state)
    assert abs((updated.layers[0].weights[0, 0] - 1.0) - (-0.001)) < 1e-9
    assert abs((updated.layers[0].bias[0] - 1.0) - (-0.001)) < 1e-9
    assert state2.t == 1


def test_adam_zero_gradient_keeps_parameters():
    rng = np.random.default_rng(5)
    mlp = nn_core.build_mlp([2, 3, 2], "relu", "linear", rng)
    state = nn_core.init_adam(mlp, 0.01)
    zero = [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in mlp.layers]
    updated, _ = nn_core.adam_step(mlp, zero, state)
    for a, b in zip(mlp.layers, updated.layers):
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)


def test_adam_step_counter_increments():
    mlp = Mlp([layer([[1.0]], [0.0], "linear")])
    state = nn_core.init_adam(mlp, 0.001)
    assert state.t == 0
    g = [(np.array([[0.5]]), np.array([0.5]))]
    mlp, state = nn_core.adam_step(mlp, g, state)
    mlp, state = nn_core.adam_step(mlp, g, state)
    assert state.t == 2


def test_adam_rejects_non_finite_gradients():
    mlp = Mlp([layer([[1.0]], [0.0], "linear")])
    state = nn_core.init_adam(mlp, 0.001)
    with pytest.raises(DivergenceError):
        nn_core.adam_step(mlp, [(np.array([[np.nan]]), np.array([0.0]))], state)


def test_adam_bit_reproducible():
    def run():
        rng = np.random.default_rng(11)
        mlp = nn_core.build_mlp([3, 4, 2], "tanh", "linear", rng)
        state = nn_core.init_adam(mlp, 0.01)
        for _ in range(5):
            grads = [
                (np.full_like(l.weights, 0.123), np.full_like(l.bias, -0.456))
                for l in mlp.layers
            ]
            mlp, state = nn_core.adam_step(mlp, grads, state)
        return mlp

    a, b = run(), run()
    for la, lb in zip(a.layers, b.layers):
        assert np.array_equal(la.weights, lb.weights)
        assert np.array_equal(la.bias, lb.bias)


def test_clip_weights_examples():
    mlp = Mlp([layer([[0.5, -0.02]], [0.005], "linear")])
    clipped = nn_core.clip_weights(mlp, 0.01)
    assert clipped.layers[0].weights[0, 0] == pytest.approx(0.01)
    assert clipped.layers[0].weights[0, 1] == pytest.approx(-0.01)
    assert clipped.layers[0].bias[0] == pytest.approx(0.005)


def test_clip_weights_idempotent():
    rng = np.random.default_rng(2)
    mlp = nn_core.build_mlp([4, 6, 3], "relu", "linear", rng)
    once = nn_core.clip_weights(mlp, 0.05)
    twice = nn_core.clip_weights(once, 0.05)
    for a, b in zip(once.layers, twice.layers):
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)


def test_clip_weights_requires_positive_bound():
    mlp = Mlp([layer([[1.0]], [0.0], "linear")])
    with pytest.raises(ValueError):
        nn_core.clip_weights(mlp, 0.0)


def test_cross_entropy_exact_match_is_zero():
    loss, grad = nn_core.cross_entropy_blocks([[1.0, 0.0]], [[1.0, 0.0]], (2,))
    assert loss == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(grad, 0.0)


def test_cross_entropy_hand_values():
    loss, _ = nn_core.cross_entropy_blocks([[0.5, 0.5]], [[1.0, 0.0]], (2,))
    assert abs(loss - math.log(2.0)) < 1e-9
    loss2, _ = nn_core.cross_entropy_blocks(
        [[0.5, 0.5, 0.5, 0.5]], [[1.0, 0.0, 0.0, 1.0]], (2, 2)
    )
    assert abs(loss2 - 2.0 * math.log(2.0)) < 1e-9


def test_cross_entropy_gradient_is_probs_minus_targets_over_batch():
    probs = np.array([[0.25, 0.75], [0.6, 0.4]])
    targets = np.array([[1.0, 0.0], [0.0, 1.0]])
    _, grad = nn_core.cross_entropy_blocks(probs, targets, (2,))
    assert np.allclose(grad, (probs - targets) / 2.0)


def test_cross_entropy_rejects_non_one_hot_targets():
    with pytest.raises(EncodingError):
        nn_core.cross_entropy_blocks([[0.5, 0.5]], [[1.0, 1.0]], (2,))
    with pytest.raises(EncodingError):
        nn_core.cross_entropy_blocks([[0.5, 0.5]], [[0.5, 0.5]], (2,))


def test_forward_backward_stay_finite_with_clipped_parameters():
    rng = np.random.default_rng(21)
    mlp = nn_core.build_mlp([6, 8, 6], "relu", "softmax_blocks", rng, output_blocks=(3, 3))
    mlp = nn_core.clip_weights(mlp, 0.01)
    batch = rng.standard_normal((16, 6)) * 100.0
    acts = nn_core.forward(mlp, batch)
    grads, dx = nn_core.backward(mlp, acts, rng.standard_normal(acts[-1].shape))
    assert all(np.isfinite(a).all() for a in acts)
    assert np.isfinite(dx).all()
    assert all(np.isfinite(gw).all() and np.isfinite(gb).all() for gw, gb in grads)


def test_forward_raises_on_overflow():
    mlp = Mlp([layer([[1e308]], [0.0], "linear")])
    with np.errstate(over="ignore"), pytest.raises(DivergenceError):
        nn_core.forward(mlp, [[1e10]])


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(31)
    mlp = nn_core.build_mlp([5, 7, 6], "sigmoid", "softmax_blocks", rng, output_blocks=(2, 4))
    path = tmp_path / "net.bin"
    nn_core.save_mlp(mlp, path)
    assert path.read_bytes()[:4] == b"SPZN"
    loaded = nn_core.load_mlp(path)
    assert len(loaded.layers) == len(mlp.layers)
    for a, b in zip(mlp.layers, loaded.layers):
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)
        assert a.activation == b.activation
        assert a.blocks == b.blocks


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ValueError):
        nn_core.load_mlp(path)
