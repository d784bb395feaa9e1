"""Dense primitives with paired gradients, Adam, and a finite-difference checker.

Matrices are plain float64 numpy arrays. All randomness in the package comes
from ``make_rng`` (numpy PCG64), so a seed fully determines a run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

RNG_ALGORITHM = "PCG64"


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator from an int seed or a sequence of ints (independent sub-streams)."""
    if isinstance(seed, (int, np.integer)):
        seed = int(seed)
    else:
        seed = [int(s) for s in seed]
    return np.random.Generator(np.random.PCG64(seed))


def as_dense(values, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce to a finite 2-D float64 array, optionally checking its shape."""
    a = np.array(values, dtype=np.float64, ndmin=2)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got {a.ndim} dimensions")
    if (rows is not None and a.shape[0] != rows) or (cols is not None and a.shape[1] != cols):
        raise ValueError(f"expected shape ({rows}, {cols}), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains NaN or Inf")
    return a


def dense_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def rowwise_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a @ b with a fixed per-row summation order, so each output row is
    bit-identical however many rows are batched (BLAS kernels vary with shape)."""
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return (a[..., :, :, None] * b[..., None, :, :]).sum(axis=-2)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_grad(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is 0
    return np.where(x > 0.0, upstream, 0.0)


def row_softmax(m: np.ndarray) -> np.ndarray:
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def row_softmax_grad(probs: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    inner = (upstream * probs).sum(axis=-1, keepdims=True)
    return probs * (upstream - inner)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> None:
    """Bias-corrected Adam update of ``param`` in place; advances ``state.t``."""
    if param.shape != grad.shape:
        raise ValueError(f"adam shape mismatch: param {param.shape} vs grad {grad.shape}")
    if state.m is None:
        state.m = np.zeros_like(param)
        state.v = np.zeros_like(param)
    elif state.m.shape != param.shape:
        raise ValueError(f"adam state shape {state.m.shape} does not match param {param.shape}")
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (grad * grad)
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    param -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class Adam:
    """Adam over a named parameter dict, one AdamState per entry."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: dict = field(default_factory=dict)

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        for name, p in params.items():
            st = self.states.get(name)
            if st is None:
                st = self.states[name] = AdamState(self.lr, self.beta1, self.beta2, self.eps)
            adam_step(p, grads[name], st)


def relative_error(analytic, numeric) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))


def numeric_gradient(loss_fn: Callable[[], float], p: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss_fn`` w.r.t. every entry of ``p`` (mutated and restored)."""
    g = np.zeros_like(p)
    flat = p.reshape(-1)
    gflat = g.reshape(-1)
    for idx in range(flat.size):
        old = flat[idx]
        flat[idx] = old + h
        lp = loss_fn()
        flat[idx] = old - h
        lm = loss_fn()
        flat[idx] = old
        if not (math.isfinite(lp) and math.isfinite(lm)):
            raise ValueError(f"non-finite loss while perturbing entry {idx}")
        gflat[idx] = (lp - lm) / (2.0 * h)
    return g


def finite_diff_check(
    loss_fn: Callable[[], float],
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    h: float = 1e-5,
) -> dict[str, float]:
    """Max relative error between analytic and central-difference gradients per parameter.

    ``loss_fn`` takes no arguments and must read the arrays in ``params``, which
    are perturbed in place and restored.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    base = loss_fn()
    if not math.isfinite(base):
        raise ValueError("loss is not finite at the check point")
    report = {}
    for name, p in params.items():
        num = numeric_gradient(loss_fn, p, h)
        report[name] = float(relative_error(grads[name], num).max()) if p.size else 0.0
    return report
