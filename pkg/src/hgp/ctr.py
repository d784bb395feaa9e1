"""Click probability sigmoid(z_uᵀz_i + x_uᵀx_i), cross-entropy loss, negative sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hetgraph import EdgeType, HetGraph, NodeType
from .numerics import sigmoid

PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class Pairs:
    """Labeled user-item pairs, stored column-wise."""

    users: np.ndarray
    items: np.ndarray
    labels: np.ndarray
    days: np.ndarray

    def __post_init__(self):
        n = len(self.users)
        for name in ("items", "labels", "days"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"pair column {name!r} has length {len(getattr(self, name))}, expected {n}")

    def __len__(self):
        return len(self.users)

    @classmethod
    def empty(cls):
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, z)

    def take(self, idx) -> "Pairs":
        return Pairs(self.users[idx], self.items[idx], self.labels[idx], self.days[idx])

    def concat(self, other: "Pairs") -> "Pairs":
        return Pairs(*(np.concatenate([getattr(self, f), getattr(other, f)])
                       for f in ("users", "items", "labels", "days")))

    def keys(self, num_nodes: int) -> np.ndarray:
        return self.users.astype(np.int64) * num_nodes + self.items.astype(np.int64)

    def check_types(self, graph: HetGraph) -> None:
        if len(self) == 0:
            return
        if np.any(graph.node_types[self.users] != NodeType.User):
            raise ValueError("pair user index does not refer to a User node")
        if np.any(graph.node_types[self.items] != NodeType.Item):
            raise ValueError("pair item index does not refer to an Item node")


def score(z_i, z_j, x_i, x_j) -> float:
    z_i, z_j, x_i, x_j = (np.asarray(v, dtype=np.float64).ravel() for v in (z_i, z_j, x_i, x_j))
    if z_i.shape != z_j.shape or x_i.shape != x_j.shape:
        raise ValueError("score: vector length mismatch")
    return float(sigmoid(np.array(z_i @ z_j + x_i @ x_j)))


def pair_logits(zu: np.ndarray, zi: np.ndarray, xu: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Row-wise z_uᵀz_i + x_uᵀx_i."""
    return (zu * zi).sum(axis=1) + (xu * xi).sum(axis=1)


def bce_loss(probs, labels) -> float:
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"bce_loss: {p.shape[0]} probabilities for {y.shape[0]} labels")
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))


def bce_logit_grad(probs, labels) -> np.ndarray:
    """dL/dlogit for the mean loss: (p - y) / batch."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    return (p - y) / p.shape[0]


class NegativeSamplingError(RuntimeError):
    pass


def observed_keys(graph: HetGraph) -> np.ndarray:
    """Sorted user*|V|+item keys of every ItemUser edge in ``graph``."""
    e = graph.edges[EdgeType.ItemUser]
    t = graph.node_types
    u = np.where(t[e[:, 0]] == NodeType.User, e[:, 0], e[:, 1])
    i = np.where(t[e[:, 0]] == NodeType.User, e[:, 1], e[:, 0])
    return np.sort(u * graph.num_nodes + i)


def _member(sorted_keys: np.ndarray, keys: np.ndarray) -> np.ndarray:
    if sorted_keys.size == 0:
        return np.zeros(keys.shape, dtype=bool)
    pos = np.searchsorted(sorted_keys, keys)
    pos = np.minimum(pos, sorted_keys.size - 1)
    return sorted_keys[pos] == keys


def sample_negatives(graph: HetGraph, positives: Pairs, ratio: float, rng: np.random.Generator,
                     exclude: np.ndarray | None = None, retries: int = 32) -> Pairs:
    """ceil(ratio) negatives per positive: same user, uniform item, never an observed pair.

    Observed pairs are the graph's ItemUser edges, ``positives`` and the
    optional ``exclude`` keys. Users whose rejection draws keep colliding fall
    back to a uniform pick from their explicit complement.
    """
    if ratio <= 0:
        raise ValueError("negative ratio must be positive")
    n = graph.num_nodes
    items = graph.nodes_of(NodeType.Item)
    if items.size == 0:
        raise NegativeSamplingError("graph has no Item nodes")
    banned = [observed_keys(graph), positives.keys(n)]
    if exclude is not None:
        banned.append(np.asarray(exclude, dtype=np.int64))
    banned = np.unique(np.concatenate(banned))

    per = int(math.ceil(ratio))
    users = np.repeat(positives.users, per)
    days = np.repeat(positives.days, per)
    chosen = items[rng.integers(0, items.size, size=users.size)]
    bad = _member(banned, users * n + chosen)
    for _ in range(retries):
        if not bad.any():
            break
        idx = np.flatnonzero(bad)
        chosen[idx] = items[rng.integers(0, items.size, size=idx.size)]
        bad[idx] = _member(banned, users[idx] * n + chosen[idx])
    for j in np.flatnonzero(bad):
        u = users[j]
        free = items[~_member(banned, u * n + items)]
        if free.size == 0:
            raise NegativeSamplingError(f"user {int(u)} interacted with every item; no negative exists")
        chosen[j] = free[rng.integers(0, free.size)]
    return Pairs(users.copy(), chosen, np.zeros(users.size, dtype=np.int64), days.copy())
