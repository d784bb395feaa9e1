"""Type-stratified, degree-proportional layer sampling with importance weights.

Within node type ``o`` a node's selection probability is q(v) ∝ d̃_v(r), and the
type receives a share of the step budget proportional to |V_o|. Nodes are
drawn without replacement by randomized systematic PPS, which realizes each
type quota exactly with inclusion probability π(v) = S_o · q(v) (nodes whose
π would exceed 1 are taken with certainty and the rest re-normalized). The
importance weight is 1 / π(v), i.e. 1 / (S_o · q(v)) away from the cap, so
the weighted sum over sampled sources is an unbiased estimate of the full
aggregation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .hetgraph import EdgeType, HetGraph, NodeType


class SamplingError(ValueError):
    pass


def sampling_distribution(graph: HetGraph, r: EdgeType) -> dict:
    """Per node type: ``(node indices, q)`` with q ∝ self-loop-augmented degree under ``r``."""
    deg = graph.degrees(r) + 1.0
    out = {}
    for ntype in NodeType:
        idx = graph.nodes_of(ntype)
        if idx.size == 0:
            continue
        d = deg[idx]
        out[ntype] = (idx, d / d.sum())
    return out


def type_quotas(sizes: dict, budget: int) -> dict:
    """Split ``budget`` over types in proportion to ``sizes`` (largest remainder)."""
    total = sum(sizes.values())
    if budget > total:
        raise SamplingError(f"budget {budget} exceeds node population {total}")
    exact = {t: budget * s / total for t, s in sizes.items()}
    quotas = {t: int(np.floor(x)) for t, x in exact.items()}
    left = budget - sum(quotas.values())
    # ties broken by type order for determinism
    order = sorted(exact, key=lambda t: (-(exact[t] - quotas[t]), int(t)))
    for t in order[:left]:
        quotas[t] += 1
    for t, q in quotas.items():
        if q > sizes[t]:
            raise SamplingError(f"quota {q} for {NodeType(t).name} exceeds its {sizes[t]} nodes")
    return quotas


def inclusion_probabilities(q: np.ndarray, size: int) -> np.ndarray:
    """π = size · q with entries capped at 1 and the excess redistributed."""
    pi = np.zeros_like(q)
    free = np.ones(q.shape[0], dtype=bool)
    remaining = size
    while remaining > 0:
        if remaining == int(free.sum()):
            pi[free] = 1.0
            break
        scale = remaining / q[free].sum()
        cand = q * scale
        over = free & (cand >= 1.0)
        if not over.any():
            pi[free] = cand[free]
            break
        pi[over] = 1.0
        free &= ~over
        remaining -= int(over.sum())
    return pi


@dataclass(frozen=True)
class SamplingPlan:
    relation: EdgeType
    budgets: tuple  # total nodes per propagation step
    quotas: tuple  # per step: {NodeType: count}
    distribution: dict  # NodeType -> (node indices, q)
    inclusion: tuple  # per step: {NodeType: π}


def build_plan(graph: HetGraph, r: EdgeType, budget: int, steps: int) -> SamplingPlan:
    dist = sampling_distribution(graph, r)
    sizes = {t: idx.size for t, (idx, _) in dist.items()}
    quotas = type_quotas(sizes, int(budget))
    incl = {t: inclusion_probabilities(dist[t][1], quotas[t]) for t in dist}
    return SamplingPlan(r, (int(budget),) * steps, (quotas,) * steps, dist, (incl,) * steps)


def _systematic(pi: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Positions selected by systematic PPS over a random ordering; exact size."""
    certain = np.flatnonzero(pi >= 1.0)
    rest = np.flatnonzero((pi > 0.0) & (pi < 1.0))
    need = size - certain.size
    if need <= 0:
        return np.sort(certain[:size])
    order = rest[rng.permutation(rest.size)]
    cum = np.cumsum(pi[order])
    cum *= need / cum[-1]
    points = rng.random() + np.arange(need)
    pos = np.searchsorted(cum, points, side="right")
    pos = np.minimum(pos, order.size - 1)
    chosen = order[pos]
    if np.unique(chosen).size != need:
        raise SamplingError("systematic sampling produced a duplicate draw")
    return np.sort(np.concatenate([certain, chosen]))


def sample_layer(plan: SamplingPlan, step: int, rng: np.random.Generator):
    """Draw one step's node set; returns ``(nodes ascending, importance weights)``."""
    quotas = plan.quotas[step]
    incl = plan.inclusion[step]
    nodes, weights = [], []
    for t in sorted(plan.distribution):
        idx, _ = plan.distribution[t]
        if quotas[t] == 0:
            continue
        pos = _systematic(incl[t], quotas[t], rng)
        nodes.append(idx[pos])
        weights.append(1.0 / incl[t][pos])
    if not nodes:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    order = np.argsort(nodes, kind="stable")
    return nodes[order], weights[order]


def restrict(adj: sp.csr_matrix, targets=None, sources=None, weights=None) -> sp.csr_matrix:
    """Rows ``targets`` and columns ``sources`` of ``adj``, columns scaled by ``weights``.

    ``None`` keeps every row / column. Column order follows ``sources``, which
    callers keep ascending so per-row summation order matches the full product.
    """
    sub = adj if targets is None else adj[targets]
    if sources is not None:
        if weights is not None and len(weights) != len(sources):
            raise SamplingError(f"{len(weights)} weights for {len(sources)} sampled nodes")
        sub = sub[:, sources]
        sub.sort_indices()
        if weights is not None:
            sub = sub.copy()
            sub.data = sub.data * np.asarray(weights, dtype=np.float64)[sub.indices]
    elif weights is not None:
        raise SamplingError("weights given without a sampled node set")
    return sub


def sampled_spmm(adj, M, nodes, weights, targets=None) -> np.ndarray:
    """Importance-weighted estimate of (adj @ full_M) from the sampled rows ``M``.

    ``M`` holds one row per sampled node (aligned with ``nodes``). Returns one
    row per target (all nodes when ``targets`` is None).
    """
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] != len(nodes):
        raise SamplingError(f"{M.shape[0]} rows for {len(nodes)} sampled nodes")
    return np.asarray(restrict(adj, targets, nodes, weights) @ M)
