"""Planted-community synthetic generator for group-user-item graphs.

Every group, user and item belongs to one of C communities. Users join groups
mostly inside their own community, and click each item independently with
probability ``p_in`` (same community) or ``p_out`` (different community).
Categorical attributes are noisy copies of the community label, so attributes
carry a weaker signal than the graph.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .ctr import Pairs
from .features import Attribute
from .hetgraph import EdgeType, NodeType, build_graph
from .numerics import RNG_ALGORITHM, make_rng


@dataclass(frozen=True)
class GenConfig:
    groups: int = 200
    users: int = 2000
    items: int = 500
    communities: int = 10
    memberships: float = 3.0  # mean groups per user
    group_in: float = 0.8  # chance a membership stays inside the user's community
    p_in: float = 0.2
    p_out: float = 0.002
    days: int = 17
    group_noise: float = 0.5
    user_noise: float = 0.7
    item_noise: float = 0.5
    numeric_dim: int = 4
    numeric_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if min(self.groups, self.users, self.items) < 1:
            raise ValueError("node counts must be positive")
        if not 0.0 < self.p_out <= self.p_in < 1.0:
            raise ValueError(f"need 0 < p_out <= p_in < 1, got p_out={self.p_out}, p_in={self.p_in}")
        if not 1 <= self.communities <= min(self.groups, self.items):
            raise ValueError(f"communities must be in [1, min(groups, items)], got {self.communities}")
        if self.days < 3:
            raise ValueError("need at least 3 days for a train/validation/test split")
        if self.memberships < 1 or self.memberships > self.groups:
            raise ValueError(f"mean memberships {self.memberships} infeasible with {self.groups} groups")
        for name in ("group_in", "group_noise", "user_noise", "item_noise"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @classmethod
    def keys(cls) -> tuple:
        return tuple(f.name for f in fields(cls))

    def to_dict(self) -> dict:
        return asdict(self)

    def expected_interactions(self) -> float:
        """Expected ItemUser edge count under the round-robin community layout."""
        per_comm = np.bincount(np.arange(self.items) % self.communities, minlength=self.communities)
        users_per = np.bincount(np.arange(self.users) % self.communities, minlength=self.communities)
        total = 0.0
        for c in range(self.communities):
            inside = per_comm[c]
            total += users_per[c] * (inside * self.p_in + (self.items - inside) * self.p_out)
        return float(total)


@dataclass(frozen=True)
class PlantedTruth:
    community: np.ndarray  # per global node index
    p_in: float
    p_out: float
    node_types: np.ndarray

    def probability(self, user: int, item: int) -> float:
        return oracle_score(self, user, item)


def oracle_score(truth: PlantedTruth, user, item):
    """Exact generating click probability for (user, item) pairs."""
    user = np.asarray(user)
    item = np.asarray(item)
    n = truth.community.shape[0]
    if np.any((user < 0) | (user >= n)) or np.any((item < 0) | (item >= n)):
        raise KeyError("unknown node id")
    if np.any(truth.node_types[user] != NodeType.User) or np.any(truth.node_types[item] != NodeType.Item):
        raise KeyError("oracle needs a User and an Item")
    same = truth.community[user] == truth.community[item]
    out = np.where(same, truth.p_in, truth.p_out)
    return float(out) if out.ndim == 0 else out


def standard_schema(cfg: GenConfig) -> dict:
    return {
        NodeType.Group: [Attribute("topic", "categorical", cfg.communities)],
        NodeType.User: [Attribute("demo", "categorical", cfg.communities),
                        Attribute("profile", "numeric", cfg.numeric_dim)],
        NodeType.Item: [Attribute("category", "categorical", cfg.communities),
                        Attribute("visual", "numeric", cfg.numeric_dim)],
    }


def _noisy_labels(rng, labels, noise, vocab):
    flip = rng.random(labels.size) < noise
    return np.where(flip, rng.integers(0, vocab, size=labels.size), labels)


def generate(cfg: GenConfig):
    """Returns a ``Dataset`` (see ``hgp.dataset``) built deterministically from ``cfg.seed``."""
    from .dataset import Dataset

    rng = make_rng(cfg.seed)
    G, U, I, C = cfg.groups, cfg.users, cfg.items, cfg.communities
    g_ids = np.arange(G)
    u_ids = G + np.arange(U)
    i_ids = G + U + np.arange(I)
    g_comm = rng.permutation(np.arange(G) % C)
    u_comm = rng.permutation(np.arange(U) % C)
    i_comm = rng.permutation(np.arange(I) % C)

    groups_by_comm = [np.flatnonzero(g_comm == c) for c in range(C)]
    gu_edges = []
    counts = 1 + rng.poisson(cfg.memberships - 1.0, size=U)
    counts = np.minimum(counts, G)
    for u in range(U):
        picked = set()
        for _ in range(int(counts[u])):
            own = groups_by_comm[u_comm[u]]
            if own.size and rng.random() < cfg.group_in:
                picked.add(int(own[rng.integers(0, own.size)]))
            else:
                picked.add(int(rng.integers(0, G)))
        for g in sorted(picked):
            gu_edges.append((int(g_ids[g]), int(u_ids[u]), EdgeType.GroupUser, 0))

    same = u_comm[:, None] == i_comm[None, :]
    prob = np.where(same, cfg.p_in, cfg.p_out)
    clicks = rng.random((U, I)) < prob
    cu, ci = np.nonzero(clicks)
    days = rng.integers(0, cfg.days, size=cu.size)
    positives = Pairs(u_ids[cu], i_ids[ci], np.ones(cu.size, dtype=np.int64), days.astype(np.int64))
    iu_edges = [(int(i), int(u), EdgeType.ItemUser, int(d))
                for u, i, d in zip(positives.users, positives.items, positives.days)]

    nodes = ([(int(v), NodeType.Group) for v in g_ids] + [(int(v), NodeType.User) for v in u_ids]
             + [(int(v), NodeType.Item) for v in i_ids])
    graph = build_graph(nodes, gu_edges + iu_edges)

    attributes = {
        NodeType.Group: {"topic": _noisy_labels(rng, g_comm, cfg.group_noise, C)},
        NodeType.User: {"demo": _noisy_labels(rng, u_comm, cfg.user_noise, C),
                        "profile": cfg.numeric_scale * rng.standard_normal((U, cfg.numeric_dim))},
        NodeType.Item: {"category": _noisy_labels(rng, i_comm, cfg.item_noise, C),
                        "visual": cfg.numeric_scale * rng.standard_normal((I, cfg.numeric_dim))},
    }
    community = np.concatenate([g_comm, u_comm, i_comm]).astype(np.int64)
    truth = PlantedTruth(community, cfg.p_in, cfg.p_out, graph.node_types)
    manifest = {
        "generator": cfg.to_dict(),
        "rng": RNG_ALGORITHM,
        "counts": {
            "groups": G, "users": U, "items": I,
            "group_user_edges": graph.num_edges(EdgeType.GroupUser),
            "item_user_edges": graph.num_edges(EdgeType.ItemUser),
            "expected_item_user_edges": cfg.expected_interactions(),
        },
    }
    ds = Dataset(graph, standard_schema(cfg), attributes, positives, truth, manifest, cfg.seed)
    ds.manifest["oracle_auc"] = ds.oracle_auc()
    return ds
