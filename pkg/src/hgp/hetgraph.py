"""Tripartite group-user-item graph with per-relation CSR adjacency."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class NodeType(enum.IntEnum):
    Group = 0
    User = 1
    Item = 2


class EdgeType(enum.IntEnum):
    GroupUser = 0
    ItemUser = 1

    @property
    def endpoint_types(self) -> frozenset:
        other = NodeType.Group if self is EdgeType.GroupUser else NodeType.Item
        return frozenset((other, NodeType.User))


# fixed relation order used for stacking, concatenation and checkpoints
EDGE_TYPES = (EdgeType.GroupUser, EdgeType.ItemUser)


class GraphError(ValueError):
    """Raised when nodes or edges violate the tripartite contract."""

    def __init__(self, message, edge=None):
        super().__init__(message)
        self.edge = edge


@dataclass(frozen=True)
class HetGraph:
    node_types: np.ndarray
    # canonical (lo, hi) pairs per relation, sorted, deduplicated
    edges: dict = field(repr=False)
    adjacency: dict = field(repr=False)
    timestamps: dict = field(default_factory=dict, repr=False)

    @property
    def num_nodes(self) -> int:
        return int(self.node_types.shape[0])

    def nodes_of(self, ntype: NodeType) -> np.ndarray:
        return np.flatnonzero(self.node_types == int(ntype))

    def num_edges(self, r: EdgeType) -> int:
        return int(self.edges[r].shape[0])

    def degrees(self, r: EdgeType) -> np.ndarray:
        """Degree of every node under relation ``r`` (self loops excluded)."""
        return np.diff(self.adjacency[r].indptr).astype(np.float64)

    def neighbors(self, r: EdgeType, v: int) -> np.ndarray:
        adj = self.adjacency[r]
        return adj.indices[adj.indptr[v]:adj.indptr[v + 1]]

    def without_edges(self, r: EdgeType) -> "HetGraph":
        """Copy of the graph with every edge of relation ``r`` removed."""
        nodes = list(enumerate(NodeType(t) for t in self.node_types))
        kept = []
        for other in EDGE_TYPES:
            if other == r:
                continue
            ts = self.timestamps.get(other)
            for j, (u, v) in enumerate(self.edges[other]):
                kept.append((int(u), int(v), other, None if ts is None else int(ts[j])))
        return build_graph(nodes, kept)


def _edge_tuple(e):
    if len(e) == 3:
        u, v, r = e
        return int(u), int(v), EdgeType(r), None
    u, v, r, t = e
    return int(u), int(v), EdgeType(r), (None if t is None else int(t))


def build_graph(nodes: Iterable[tuple], edges: Iterable[Sequence]) -> HetGraph:
    """Build a validated HetGraph.

    ``nodes`` holds ``(node_id, NodeType)`` pairs with ids dense in ``[0, |V|)``.
    ``edges`` holds ``(u, v, EdgeType)`` or ``(u, v, EdgeType, day)`` tuples.
    Duplicate edges collapse to one, keeping the earliest timestamp.
    """
    nodes = list(nodes)
    n = len(nodes)
    node_types = np.full(n, -1, dtype=np.int8)
    for nid, ntype in nodes:
        nid = int(nid)
        if not 0 <= nid < n:
            raise GraphError(f"node id {nid} outside dense range [0, {n})")
        if node_types[nid] != -1:
            raise GraphError(f"duplicate node id {nid}")
        node_types[nid] = int(NodeType(ntype))
    node_types.setflags(write=False)

    pairs = {r: {} for r in EDGE_TYPES}
    for e in edges:
        u, v, r, t = _edge_tuple(e)
        for x in (u, v):
            if not 0 <= x < n:
                raise GraphError(f"edge ({u}, {v}, {r.name}) endpoint {x} out of range", edge=(u, v, r))
        want = r.endpoint_types
        for x in (u, v):
            got = NodeType(node_types[x])
            if got not in want:
                raise GraphError(
                    f"{r.name} endpoint of type {got.name} in edge ({u}, {v})", edge=(u, v, r)
                )
        if NodeType(node_types[u]) == NodeType(node_types[v]):
            raise GraphError(f"{r.name} edge ({u}, {v}) joins two {NodeType(node_types[u]).name} nodes",
                             edge=(u, v, r))
        key = (min(u, v), max(u, v))
        prev = pairs[r].get(key, "missing")
        if prev == "missing" or (t is not None and (prev is None or t < prev)):
            pairs[r][key] = t

    edge_arrays, adjacency, timestamps = {}, {}, {}
    for r in EDGE_TYPES:
        keys = sorted(pairs[r])
        arr = np.array(keys, dtype=np.int64).reshape(-1, 2)
        arr.setflags(write=False)
        edge_arrays[r] = arr
        ts = [pairs[r][k] for k in keys]
        if ts and all(t is not None for t in ts):
            tarr = np.array(ts, dtype=np.int64)
            tarr.setflags(write=False)
            timestamps[r] = tarr
        rows = np.concatenate([arr[:, 0], arr[:, 1]])
        cols = np.concatenate([arr[:, 1], arr[:, 0]])
        adj = sp.csr_matrix((np.ones(rows.shape[0]), (rows, cols)), shape=(n, n))
        adj.sort_indices()
        adjacency[r] = adj
    return HetGraph(node_types, edge_arrays, adjacency, timestamps)


def normalized_adjacency(graph: HetGraph, r: EdgeType) -> sp.csr_matrix:
    """D̃^-1/2 (A_r + I) D̃^-1/2 over the full node index space.

    Self loops are added for every node, including nodes that relation ``r``
    never touches, so isolated rows reduce to ``[v, v] = 1``.
    """
    n = graph.num_nodes
    a_tilde = (graph.adjacency[r] + sp.identity(n, format="csr")).tocsr()
    a_tilde.sum_duplicates()
    a_tilde.sort_indices()
    deg = np.asarray(a_tilde.sum(axis=1)).ravel()
    rows = np.repeat(np.arange(n), np.diff(a_tilde.indptr))
    cols = a_tilde.indices
    # d_u * d_v is commutative in IEEE arithmetic, so [u, v] == [v, u] bitwise
    data = a_tilde.data / np.sqrt(deg[rows] * deg[cols])
    out = sp.csr_matrix((data, cols.copy(), a_tilde.indptr.copy()), shape=(n, n))
    out.has_sorted_indices = True
    return out


def spmm(adj: sp.csr_matrix, m: np.ndarray) -> np.ndarray:
    """CSR times dense; each output row sums its nonzeros in ascending column order."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or adj.shape[1] != m.shape[0]:
        raise ValueError(f"spmm shape mismatch: adjacency {adj.shape} vs matrix {m.shape}")
    return np.asarray(adj @ m)


def spectral_radius_estimate(adj: sp.csr_matrix, iters: int = 200, seed: int = 0) -> float:
    """Power-iteration lower estimate ||Ax|| / ||x|| of the spectral radius."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(adj.shape[0])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = adj @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        est = norm
        x = y / norm
    return float(est)
