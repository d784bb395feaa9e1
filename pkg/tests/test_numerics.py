import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hgp.numerics import (Adam, AdamState, adam_step, as_dense, dense_matmul, finite_diff_check, glorot, make_rng,
                          numeric_gradient, relative_error, relu, relu_grad, row_softmax, row_softmax_grad, sigmoid)


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def test_matmul_examples(rng):
    B = rng.standard_normal((2, 3))
    np.testing.assert_array_equal(dense_matmul(np.eye(2), B), B)
    np.testing.assert_array_equal(dense_matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.ones((2, 1))), [[3.0], [7.0]])
    a, b = rng.standard_normal((7, 5)), rng.standard_normal((5, 3))
    assert np.abs(dense_matmul(a, b) - naive_matmul(a, b)).max() <= 1e-12


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        dense_matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_associative(rng):
    a, b, c = rng.standard_normal((4, 5)), rng.standard_normal((5, 6)), rng.standard_normal((6, 3))
    lhs = dense_matmul(dense_matmul(a, b), c)
    rhs = dense_matmul(a, dense_matmul(b, c))
    assert np.abs(lhs - rhs).max() <= 1e-10


def test_as_dense_rejects_nonfinite():
    with pytest.raises(ValueError, match="NaN or Inf"):
        as_dense([[1.0, np.nan]])
    with pytest.raises(ValueError, match="expected shape"):
        as_dense([[1.0, 2.0]], rows=2)
    assert as_dense([1.0, 2.0]).shape == (1, 2)


def test_relu():
    np.testing.assert_array_equal(relu(np.array([[-1.0, 2.0]])), [[0.0, 2.0]])
    np.testing.assert_array_equal(relu(-np.ones((2, 3))), np.zeros((2, 3)))
    x = np.array([-0.5, 0.0, 0.5])
    np.testing.assert_array_equal(relu_grad(x, np.ones(3)), [0.0, 0.0, 1.0])


def test_softmax_examples():
    np.testing.assert_array_equal(row_softmax(np.array([[0.0, 0.0]])), [[0.5, 0.5]])
    big = row_softmax(np.array([[1000.0, 0.0]]))
    assert np.all(np.isfinite(big))
    assert big[0, 0] == pytest.approx(1.0) and big[0, 1] == pytest.approx(0.0, abs=1e-300)
    np.testing.assert_allclose(row_softmax(np.array([[math.log(2.0), 0.0]])), [[2 / 3, 1 / 3]], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-50, 50))
def test_softmax_rows_sum_and_shift_invariance(seed, shift):
    m = make_rng(seed).standard_normal((4, 6)) * 10
    p = row_softmax(m)
    assert np.abs(p.sum(axis=1) - 1).max() <= 1e-12
    np.testing.assert_allclose(row_softmax(m + shift), p, atol=1e-12)


def test_softmax_grad_matches_jacobian(rng):
    m = rng.standard_normal((1, 5))
    p = row_softmax(m)
    up = rng.standard_normal((1, 5))
    J = np.diag(p[0]) - np.outer(p[0], p[0])
    np.testing.assert_allclose(row_softmax_grad(p, up)[0], J @ up[0], atol=1e-14)


def test_sigmoid_stable():
    s = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    np.testing.assert_array_equal(s, [0.0, 0.5, 1.0])


def test_adam_one_step():
    p = np.zeros((1, 1))
    st_ = AdamState(lr=1e-3)
    adam_step(p, np.ones((1, 1)), st_)
    assert st_.t == 1
    assert p[0, 0] == pytest.approx(-1e-3 / (1 + 1e-8), abs=1e-15)
    assert p[0, 0] == pytest.approx(-0.000999999, abs=1e-9)


def test_adam_zero_grad_no_move():
    p = np.full((2, 2), 3.0)
    adam_step(p, np.zeros((2, 2)), AdamState())
    np.testing.assert_array_equal(p, 3.0)


def test_adam_constant_gradient_equal_steps():
    p = np.zeros((1, 1))
    st_ = AdamState()
    adam_step(p, np.full((1, 1), 0.3), st_)
    d1 = p[0, 0]
    adam_step(p, np.full((1, 1), 0.3), st_)
    d2 = p[0, 0] - d1
    assert d2 == pytest.approx(d1, rel=1e-9)


def reference_adam(theta, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    return theta


def test_adam_matches_scalar_reference(rng):
    grads = rng.standard_normal(20)
    p = np.full((1, 1), 0.7)
    st_ = AdamState()
    for g in grads:
        adam_step(p, np.full((1, 1), g), st_)
    assert p[0, 0] == pytest.approx(reference_adam(0.7, grads), abs=1e-15)
    assert np.all(st_.v >= 0)


def test_adam_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        adam_step(np.zeros((2, 2)), np.zeros((2, 1)), AdamState())


def test_adam_dict_per_param_state():
    params = {"a": np.zeros((1, 1)), "b": np.zeros((1, 1))}
    opt = Adam()
    opt.step(params, {"a": np.ones((1, 1)), "b": np.zeros((1, 1))})
    assert params["a"][0, 0] < 0 and params["b"][0, 0] == 0
    assert set(opt.states) == {"a", "b"}


def test_finite_diff_polynomial():
    x = np.array([[3.0]])
    g = numeric_gradient(lambda: float(x[0, 0] ** 2), x)
    assert g[0, 0] == pytest.approx(6.0, abs=1e-6)
    rep = finite_diff_check(lambda: 1.0, {"x": x}, {"x": np.zeros((1, 1))})
    assert rep["x"] == 0.0
    assert x[0, 0] == 3.0


def test_finite_diff_rejects_nonfinite():
    x = np.array([[1.0]])
    with pytest.raises(ValueError, match="not finite"):
        finite_diff_check(lambda: float("nan"), {"x": x}, {"x": x})
    with pytest.raises(ValueError, match="positive"):
        finite_diff_check(lambda: 1.0, {"x": x}, {"x": x}, h=0)


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1.0, 3.0) == pytest.approx(0.5)


def test_rng_determinism_and_streams():
    a = make_rng([7, 2]).random(5)
    np.testing.assert_array_equal(a, make_rng([7, 2]).random(5))
    assert not np.array_equal(a, make_rng([7, 3]).random(5))
    assert make_rng(np.int64(4)).random() == make_rng(4).random()


def test_glorot_bounds(rng):
    w = glorot(rng, 16, 16)
    assert np.abs(w).max() <= math.sqrt(6 / 32)
    assert w.shape == (16, 16)


def test_rowwise_matmul_batch_invariant(rng):
    from hgp.numerics import rowwise_matmul
    a, b = rng.standard_normal((37, 16)), rng.standard_normal((16, 9))
    full = rowwise_matmul(a, b)
    np.testing.assert_allclose(full, a @ b, atol=1e-13)
    for i in (0, 17, 36):
        np.testing.assert_array_equal(rowwise_matmul(a[i:i + 1], b)[0], full[i])
    with pytest.raises(ValueError, match="shape mismatch"):
        rowwise_matmul(a, a)
