"""Single-head scaled dot-product self-attention over a node's per-relation rows,
followed by concatenation and a linear map to the node representation z."""

from __future__ import annotations

import math

import numpy as np

from .hetgraph import EDGE_TYPES
from .numerics import glorot, row_softmax, row_softmax_grad, rowwise_matmul


def init_attn_params(m: int, rng, d_k: int = 16, d_v: int = 8, z_dim: int = 16,
                     relations: int = len(EDGE_TYPES)) -> dict:
    return {
        "attn_wq": glorot(rng, m, d_k),
        "attn_wk": glorot(rng, m, d_k),
        "attn_wv": glorot(rng, m, d_v),
        "fuse_w": glorot(rng, relations * d_v, z_dim),
        "fuse_b": np.zeros((1, z_dim)),
    }


def attention(Q: np.ndarray, K: np.ndarray, V: np.ndarray) -> np.ndarray:
    """softmax(Q Kᵀ / sqrt(d_k)) V."""
    if Q.shape[-1] != K.shape[-1] or K.shape[-2] != V.shape[-2]:
        raise ValueError(f"attention shape mismatch: Q {Q.shape}, K {K.shape}, V {V.shape}")
    d_k = Q.shape[-1]
    weights = row_softmax(Q @ np.swapaxes(K, -1, -2) / math.sqrt(d_k))
    return weights @ V


def stack_relations(Z: dict, rows=None) -> np.ndarray:
    """Y with shape (nodes, |R|, m); relation axis in the fixed global order."""
    parts = [Z[r] if rows is None else Z[r][rows] for r in EDGE_TYPES]
    return np.stack(parts, axis=1)


def fuse_forward(Y: np.ndarray, params: dict):
    """Batched fusion of Y (B, |R|, m) -> z (B, z_dim). Returns ``(z, cache)``."""
    wq, wk, wv = params["attn_wq"], params["attn_wk"], params["attn_wv"]
    if Y.ndim != 3 or Y.shape[2] != wq.shape[0]:
        raise ValueError(f"stack shape {Y.shape} incompatible with W_Q {wq.shape}")
    # row-independent products keep z_i a function of Y_i alone, bit for bit
    Q = rowwise_matmul(Y, wq)
    K = rowwise_matmul(Y, wk)
    V = rowwise_matmul(Y, wv)
    scale = 1.0 / math.sqrt(wq.shape[1])
    probs = row_softmax(rowwise_matmul(Q, np.swapaxes(K, 1, 2)) * scale)
    O = rowwise_matmul(probs, V)
    flat = O.reshape(O.shape[0], -1)
    z = rowwise_matmul(flat, params["fuse_w"]) + params["fuse_b"]
    return z, (Y, Q, K, V, probs, flat, scale)


def fuse_backward(cache, dz: np.ndarray, params: dict, grads: dict) -> np.ndarray:
    """Accumulate attention/fusion gradients; returns dL/dY."""
    Y, Q, K, V, probs, flat, scale = cache
    grads["fuse_w"] += flat.T @ dz
    grads["fuse_b"] += dz.sum(axis=0, keepdims=True)
    dO = (dz @ params["fuse_w"].T).reshape(V.shape[0], V.shape[1], -1)
    dprobs = dO @ np.swapaxes(V, 1, 2)
    dV = np.swapaxes(probs, 1, 2) @ dO
    dS = row_softmax_grad(probs, dprobs) * scale
    dQ = dS @ K
    dK = np.swapaxes(dS, 1, 2) @ Q
    m = Y.shape[2]
    Yf = Y.reshape(-1, m)
    grads["attn_wq"] += Yf.T @ dQ.reshape(-1, dQ.shape[2])
    grads["attn_wk"] += Yf.T @ dK.reshape(-1, dK.shape[2])
    grads["attn_wv"] += Yf.T @ dV.reshape(-1, dV.shape[2])
    dY = dQ @ params["attn_wq"].T + dK @ params["attn_wk"].T + dV @ params["attn_wv"].T
    return dY


def fuse_node(Y_i: np.ndarray, params: dict) -> np.ndarray:
    """z_i for one node from its (|R|, m) relation stack."""
    z, _ = fuse_forward(np.asarray(Y_i, dtype=np.float64)[None], params)
    return z[0]


def fuse_all(Z: dict, params: dict, nodes) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=np.int64)
    n = next(iter(Z.values())).shape[0]
    if nodes.size and (nodes.min() < 0 or nodes.max() >= n):
        raise IndexError(f"node index out of range [0, {n})")
    z, _ = fuse_forward(stack_relations(Z, nodes), params)
    return z
