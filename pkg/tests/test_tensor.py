"""Numerical core: forward oracles, gradient checks, SGD semantics."""

import numpy as np
import pytest

from corridorpilot import tensor as T
from corridorpilot.errors import DimensionError, DomainError, NumericError, StateError

from oracles import (
    conv2d_loops,
    matmul_loops,
    max_rel_error,
    numeric_grad,
    softmax_xent_highprec,
)

GRAD_TOL = 1e-3


def rand(rng, *shape):
    return rng.standard_normal(shape)


# ---------------------------------------------------------------------------
# conv2d
# ---------------------------------------------------------------------------

def test_conv_identity_kernel():
    rng = np.random.default_rng(0)
    x = rand(rng, 1, 3, 3)
    w = np.ones((1, 1, 1, 1))
    b = np.zeros(1)
    y, _ = T.conv2d_forward(x, w, b, stride=1, pad=0)
    np.testing.assert_array_equal(y, x)


def test_conv_sum_of_ones():
    x = np.ones((1, 2, 2))
    w = np.ones((1, 1, 2, 2))
    y, _ = T.conv2d_forward(x, w, np.zeros(1), stride=1, pad=0)
    assert y.shape == (1, 1, 1)
    assert y[0, 0, 0] == 4.0


def test_conv_matches_loop_oracle_seeded_case():
    rng = np.random.default_rng(42)
    x = rand(rng, 2, 5, 5)
    w = rand(rng, 3, 2, 3, 3)
    b = rand(rng, 3)
    y, _ = T.conv2d_forward(x, w, b, stride=2, pad=1)
    ref = conv2d_loops(x, w, b, stride=2, pad=1)
    np.testing.assert_allclose(y, ref, atol=1e-6)


def test_conv_matches_loop_oracle_shape_grid():
    # randomized shape grid: C<=4, H,W<=9, k<=3, stride<=2, pad<=1
    rng = np.random.default_rng(7)
    for _ in range(40):
        cin = int(rng.integers(1, 5))
        cout = int(rng.integers(1, 5))
        k = int(rng.integers(1, 4))
        stride = int(rng.integers(1, 3))
        pad = int(rng.integers(0, 2))
        h = int(rng.integers(max(k - 2 * pad, 1), 10))
        w = int(rng.integers(max(k - 2 * pad, 1), 10))
        x = rand(rng, cin, h, w)
        wt = rand(rng, cout, cin, k, k)
        b = rand(rng, cout)
        y, _ = T.conv2d_forward(x, wt, b, stride=stride, pad=pad)
        ref = conv2d_loops(x, wt, b, stride=stride, pad=pad)
        np.testing.assert_allclose(y, ref, atol=1e-6)


def test_conv_backward_zero_grad():
    rng = np.random.default_rng(1)
    x = rand(rng, 2, 4, 4)
    w = rand(rng, 3, 2, 3, 3)
    y, cache = T.conv2d_forward(x, w, np.zeros(3), 1, 1)
    dx, dw, db = T.conv2d_backward(np.zeros_like(y), cache)
    assert not dx.any() and not dw.any() and not db.any()


def test_conv_backward_identity_kernel():
    rng = np.random.default_rng(2)
    x = rand(rng, 1, 3, 3)
    w = np.ones((1, 1, 1, 1))
    y, cache = T.conv2d_forward(x, w, np.zeros(1), 1, 0)
    dx, _, _ = T.conv2d_backward(np.ones_like(y), cache)
    np.testing.assert_array_equal(dx, np.ones_like(x))


def test_conv_backward_without_cache_is_state_error():
    with pytest.raises(StateError):
        T.conv2d_backward(np.ones((1, 1, 1)), None)


def test_conv_shape_mismatch():
    with pytest.raises(DimensionError):
        T.conv2d_forward(np.ones((2, 4, 4)), np.ones((1, 3, 3, 3)), np.zeros(1))


def test_conv_nonfinite_input():
    x = np.full((1, 3, 3), np.nan)
    with pytest.raises(NumericError):
        T.conv2d_forward(x, np.ones((1, 1, 1, 1)), np.zeros(1))


# ---------------------------------------------------------------------------
# gradient checks vs central finite differences (64-bit reference path)
# ---------------------------------------------------------------------------

def _check_grads_conv(seed):
    rng = np.random.default_rng(seed)
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, 2))
    k = int(rng.integers(1, 4))
    x = rand(rng, 2, 6, 6)
    w = rand(rng, 3, 2, k, k)
    b = rand(rng, 3)
    y, cache = T.conv2d_forward(x, w, b, stride, pad)
    r = rand(rng, *y.shape)  # fixed projection makes the output scalar

    dx, dw, db = T.conv2d_backward(r, cache)
    num_dx = numeric_grad(lambda v: float((T.conv2d_forward(v, w, b, stride, pad)[0] * r).sum()), x)
    num_dw = numeric_grad(lambda v: float((T.conv2d_forward(x, v, b, stride, pad)[0] * r).sum()), w)
    num_db = numeric_grad(lambda v: float((T.conv2d_forward(x, w, v, stride, pad)[0] * r).sum()), b)
    assert max_rel_error(dx, num_dx) < GRAD_TOL
    assert max_rel_error(dw, num_dw) < GRAD_TOL
    assert max_rel_error(db, num_db) < GRAD_TOL


def _check_grads_relu(seed):
    rng = np.random.default_rng(seed)
    x = rand(rng, 4, 5) + 0.05  # keep points away from the kink
    y, cache = T.relu_forward(x)
    r = rand(rng, *y.shape)
    dx = T.relu_backward(r, cache)
    num = numeric_grad(lambda v: float((T.relu_forward(v)[0] * r).sum()), x)
    assert max_rel_error(dx, num) < GRAD_TOL


def _check_grads_maxpool(seed):
    rng = np.random.default_rng(seed)
    x = rand(rng, 2, 6, 6)
    y, cache = T.maxpool2d_forward(x, 2, 2)
    r = rand(rng, *y.shape)
    dx = T.maxpool2d_backward(r, cache)
    num = numeric_grad(lambda v: float((T.maxpool2d_forward(v, 2, 2)[0] * r).sum()), x)
    assert max_rel_error(dx, num) < GRAD_TOL


def _check_grads_dense(seed):
    rng = np.random.default_rng(seed)
    x = rand(rng, 7)
    w = rand(rng, 7, 4)
    b = rand(rng, 4)
    y, cache = T.dense_forward(x, w, b)
    r = rand(rng, *y.shape)
    dx, dw, db = T.dense_backward(r, cache)
    num_dx = numeric_grad(lambda v: float((T.dense_forward(v, w, b)[0] * r).sum()), x)
    num_dw = numeric_grad(lambda v: float((T.dense_forward(x, v, b)[0] * r).sum()), w)
    num_db = numeric_grad(lambda v: float((T.dense_forward(x, w, v)[0] * r).sum()), b)
    assert max_rel_error(dx, num_dx) < GRAD_TOL
    assert max_rel_error(dw, num_dw) < GRAD_TOL
    assert max_rel_error(db, num_db) < GRAD_TOL


def _check_grads_flatten(seed):
    rng = np.random.default_rng(seed)
    x = rand(rng, 2, 3, 4)
    y, cache = T.flatten_forward(x)
    r = rand(rng, *y.shape)
    dx = T.flatten_backward(r, cache)
    num = numeric_grad(lambda v: float((T.flatten_forward(v)[0] * r).sum()), x)
    assert max_rel_error(dx, num) < GRAD_TOL


def _check_grads_softmax_xent(seed):
    rng = np.random.default_rng(seed)
    logits = rand(rng, 6)
    label = int(rng.integers(0, 6))
    _, grad = T.softmax_cross_entropy(logits, label)
    num = numeric_grad(lambda v: T.softmax_cross_entropy(v, label)[0], logits)
    assert max_rel_error(grad, num) < GRAD_TOL


LAYER_CHECKS = {
    "conv2d": _check_grads_conv,
    "relu": _check_grads_relu,
    "maxpool2d": _check_grads_maxpool,
    "dense": _check_grads_dense,
    "flatten": _check_grads_flatten,
    "softmax_xent": _check_grads_softmax_xent,
}


@pytest.mark.parametrize("kind", sorted(LAYER_CHECKS))
def test_gradients_match_finite_differences(kind):
    for seed in range(10):
        LAYER_CHECKS[kind](seed)


# ---------------------------------------------------------------------------
# relu / maxpool / dense forward semantics
# ---------------------------------------------------------------------------

def test_relu_values():
    y, _ = T.relu_forward(np.array([-1.0, 0.0, 2.0]))
    np.testing.assert_array_equal(y, [0.0, 0.0, 2.0])


def test_maxpool_value_and_routing():
    x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    y, cache = T.maxpool2d_forward(x, 2, 2)
    assert y.reshape(()) == 4.0
    dx = T.maxpool2d_backward(np.ones_like(y), cache)
    np.testing.assert_array_equal(dx, [[[0.0, 0.0], [0.0, 1.0]]])


def test_maxpool_tie_break_first_rowmajor():
    x = np.array([[[5.0, 5.0], [5.0, 5.0]]])
    _, cache = T.maxpool2d_forward(x, 2, 2)
    dx = T.maxpool2d_backward(np.ones((1, 1, 1)), cache)
    np.testing.assert_array_equal(dx, [[[1.0, 0.0], [0.0, 0.0]]])


def test_dense_matches_matmul_oracle():
    rng = np.random.default_rng(8)
    x = rand(rng, 8)
    w = rand(rng, 8, 8)
    b = rand(rng, 8)
    y, _ = T.dense_forward(x, w, b)
    np.testing.assert_allclose(y, matmul_loops(x, w, b), atol=1e-6)


# ---------------------------------------------------------------------------
# softmax cross-entropy
# ---------------------------------------------------------------------------

def test_xent_uniform_logits_is_ln6():
    loss, _ = T.softmax_cross_entropy(np.zeros(6), 3)
    assert loss == pytest.approx(np.log(6.0), abs=1e-6)


def test_xent_near_certain_correct():
    loss, _ = T.softmax_cross_entropy(np.array([50.0, 0, 0, 0, 0, 0]), 0)
    assert loss < 1e-9


def test_xent_matches_direct_high_precision():
    rng = np.random.default_rng(11)
    for _ in range(20):
        logits = rng.standard_normal(6) * 5
        label = int(rng.integers(0, 6))
        loss, grad = T.softmax_cross_entropy(logits, label)
        ref_loss, ref_grad = softmax_xent_highprec(logits, label)
        assert loss == pytest.approx(ref_loss, abs=1e-6)
        np.testing.assert_allclose(grad, ref_grad, atol=1e-6)


def test_xent_label_out_of_range():
    with pytest.raises(DomainError):
        T.softmax_cross_entropy(np.zeros(6), 6)


def test_softmax_sums_to_one_and_loss_nonnegative():
    rng = np.random.default_rng(13)
    for _ in range(50):
        logits = rng.standard_normal(6) * 10
        p = T.softmax(logits)
        assert abs(p.sum() - 1.0) < 1e-6
        loss, _ = T.softmax_cross_entropy(logits, int(rng.integers(0, 6)))
        assert loss >= 0.0


# ---------------------------------------------------------------------------
# SGD
# ---------------------------------------------------------------------------

def test_sgd_single_step():
    p = T.Tensor(np.array([1.0]))
    p.grad = np.array([0.5])
    v = np.zeros(1)
    T.sgd_update(p, v, base_lr=0.1, momentum=0.0, lr_mult=1.0)
    assert p.data[0] == pytest.approx(0.95)


def test_sgd_lr_mult_zero_freezes():
    p = T.Tensor(np.array([1.0, -2.0]))
    before = p.data.copy()
    p.grad = np.array([100.0, -7.0])
    v = np.zeros(2)
    T.sgd_update(p, v, base_lr=0.1, momentum=0.9, lr_mult=0.0)
    np.testing.assert_array_equal(p.data, before)


def test_sgd_two_momentum_steps():
    # v1 = 1.0, p = -0.1; v2 = 0.9 + 1 = 1.9, p = -0.1 - 0.19 = -0.29
    p = T.Tensor(np.array([0.0]))
    v = np.zeros(1)
    for _ in range(2):
        p.grad = np.array([1.0])
        T.sgd_update(p, v, base_lr=0.1, momentum=0.9, lr_mult=1.0)
    assert p.data[0] == pytest.approx(-0.29)


def test_sgd_shape_mismatch():
    p = T.Tensor(np.zeros(3))
    p.grad = np.zeros(2)
    with pytest.raises(DimensionError):
        T.sgd_update(p, np.zeros(3), 0.1, 0.0, 1.0)


def test_sgd_step_over_lists():
    ps = [T.Tensor(np.array([1.0])), T.Tensor(np.array([1.0]))]
    for p in ps:
        p.grad = np.array([1.0])
    vs = [np.zeros(1), np.zeros(1)]
    T.sgd_step(ps, vs, base_lr=0.1, momentum=0.0, lr_mults=[1.0, 0.0])
    assert ps[0].data[0] == pytest.approx(0.9)
    assert ps[1].data[0] == 1.0


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------

def test_ops_bitwise_deterministic():
    def run():
        rng = np.random.default_rng(99)
        x = rng.standard_normal((2, 8, 8)).astype(np.float32)
        w = rng.standard_normal((4, 2, 3, 3)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        y, cache = T.conv2d_forward(x, w, b, 2, 1)
        dx, dw, db = T.conv2d_backward(np.ones_like(y), cache)
        return y.tobytes(), dx.tobytes(), dw.tobytes(), db.tobytes()

    assert run() == run()


def test_glorot_deterministic_and_bounded():
    from corridorpilot.rng import make_rng

    a = T.glorot_uniform(make_rng(5), (64, 32), 64, 32)
    b = T.glorot_uniform(make_rng(5), (64, 32), 64, 32)
    assert a.tobytes() == b.tobytes()
    limit = np.sqrt(6.0 / 96)
    assert np.abs(a).max() <= limit
