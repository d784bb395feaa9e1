"""Personalized-PageRank propagation: APPNP, HGP's nonlinear per-relation variant,
the teleport-free baseline, and the dense fixed-point oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hetgraph import EDGE_TYPES, spmm
from .numerics import relu, relu_grad
from .sampler import restrict


@dataclass(frozen=True)
class PropagationConfig:
    alpha: float = 0.1
    K: int = 10

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"teleport probability must lie in (0, 1], got {self.alpha}")
        if int(self.K) != self.K or self.K < 0:
            raise ValueError(f"step count must be a non-negative integer, got {self.K}")


def _check_rows(adj, H):
    if H.ndim != 2 or adj.shape[1] != H.shape[0]:
        raise ValueError(f"shape mismatch: adjacency {adj.shape} vs H {H.shape}")


def appnp_propagate(adj, H: np.ndarray, cfg: PropagationConfig) -> np.ndarray:
    """Z^(k) = (1 - α) Â Z^(k-1) + α H, iterated K times from Z^(0) = H."""
    _check_rows(adj, H)
    Z = H
    for _ in range(cfg.K):
        Z = (1.0 - cfg.alpha) * spmm(adj, Z) + cfg.alpha * H
    return Z


def fixed_point_solve(adj, H: np.ndarray, alpha: float, max_nodes: int = 2000) -> np.ndarray:
    """Dense solve of (I - (1 - α) Â) Z = α H, the K -> ∞ limit of APPNP."""
    _check_rows(adj, H)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"teleport probability must lie in (0, 1], got {alpha}")
    n = adj.shape[0]
    if n > max_nodes:
        raise ValueError(f"fixed-point oracle limited to {max_nodes} nodes, graph has {n}")
    system = np.eye(n) - (1.0 - alpha) * adj.toarray()
    return np.linalg.solve(system, alpha * H)


def plain_propagate(adj, H: np.ndarray, K: int) -> np.ndarray:
    """K rounds of Â Z with no teleport and no weights (the oversmoothing baseline)."""
    _check_rows(adj, H)
    Z = H
    for _ in range(K):
        Z = spmm(adj, Z)
    return Z


@dataclass(frozen=True)
class CosineStats:
    mean: float
    min: float
    used: int
    zero_rows: int


def row_cosine_stats(Z: np.ndarray, nodes) -> CosineStats:
    """Mean and min pairwise cosine similarity among rows ``nodes`` (zero rows dropped)."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        raise ValueError("empty node subset")
    rows = Z[nodes]
    norms = np.linalg.norm(rows, axis=1)
    keep = norms > 0
    rows = rows[keep] / norms[keep, None]
    k = rows.shape[0]
    if k < 2:
        raise ValueError("need at least two nonzero rows")
    sims = rows @ rows.T
    iu = np.triu_indices(k, 1)
    vals = sims[iu]
    return CosineStats(float(vals.mean()), float(vals.min()), k, int((~keep).sum()))


@dataclass
class Layer:
    """Source rows feeding one propagation step; ``None`` means every node."""

    nodes: np.ndarray | None = None
    weights: np.ndarray | None = None


@dataclass
class PropagationState:
    Z: dict  # EdgeType -> final representation rows
    H: np.ndarray
    targets: np.ndarray | None = None
    cache: dict = field(default_factory=dict, repr=False)


def hgp_forward(adjs: dict, H: np.ndarray, cfg: PropagationConfig, W: list,
                targets=None, layers: dict | None = None) -> PropagationState:
    """Z_r^(k+1) = (1 - α) ReLU(Â_r Z_r^(k) W^(k)) + α H for every relation r.

    The step matrices ``W`` are shared across relations. ``targets`` restricts
    the rows produced by the last step (all nodes if None). ``layers[r][k]``
    names the source rows of step k; omitted layers mean exact full-graph
    propagation. Evaluated as ReLU(Â (Z W)), which keeps the dense product on
    the source rows.
    """
    if len(W) != cfg.K:
        raise ValueError(f"expected {cfg.K} step matrices, got {len(W)}")
    m = H.shape[1]
    for w in W:
        if w.shape != (m, m):
            raise ValueError(f"step matrix shape {w.shape}, expected {(m, m)}")
    a = cfg.alpha
    state = PropagationState({}, H, targets)
    for r in EDGE_TYPES:
        adj = adjs[r]
        _check_rows(adj, H)
        lay = layers[r] if layers is not None else [Layer() for _ in range(cfg.K)]
        first = lay[0].nodes if cfg.K else targets
        Z = H if first is None else H[first]
        steps = []
        for k in range(cfg.K):
            src = lay[k]
            tgt = lay[k + 1].nodes if k + 1 < cfg.K else targets
            A = restrict(adj, tgt, src.nodes, src.weights)
            P = Z @ W[k]
            U = np.asarray(A @ P)
            Hrows = H if tgt is None else H[tgt]
            Znew = (1.0 - a) * relu(U) + a * Hrows
            steps.append((Z, A, U, tgt))
            Z = Znew
        state.Z[r] = Z
        state.cache[r] = (first, steps)
    return state


def hgp_backward(state: PropagationState, cfg: PropagationConfig, W: list, dZ: dict):
    """Gradients of the loss w.r.t. H and each step matrix, given dL/dZ_r^(K)."""
    a = cfg.alpha
    dH = np.zeros_like(state.H)
    dW = [np.zeros_like(w) for w in W]
    for r in EDGE_TYPES:
        g = dZ.get(r)
        if g is None:
            continue
        first, steps = state.cache[r]
        for k in range(len(steps) - 1, -1, -1):
            Zprev, A, U, tgt = steps[k]
            if tgt is None:
                dH += a * g
            else:
                dH[tgt] += a * g
            dU = (1.0 - a) * relu_grad(U, g)
            dP = np.asarray(A.T @ dU)
            dW[k] += Zprev.T @ dP
            g = dP @ W[k].T
        if first is None:
            dH += g
        else:
            dH[first] += g
    return dH, dW


def hgp_propagate(adjs: dict, H: np.ndarray, cfg: PropagationConfig, W: list) -> PropagationState:
    """Full-graph HGP propagation; every Z_r has one row per node."""
    return hgp_forward(adjs, H, cfg, W)
