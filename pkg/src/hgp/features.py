"""Raw node attributes -> feature matrix X -> per-type predictions H."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hetgraph import HetGraph, NodeType
from .numerics import glorot, relu, relu_grad


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str  # "categorical" or "numeric"
    size: int  # vocabulary size or vector dimension

    def __post_init__(self):
        if self.kind not in ("categorical", "numeric"):
            raise ValueError(f"attribute {self.name}: unknown kind {self.kind!r}")
        if self.size < 1:
            raise ValueError(f"attribute {self.name}: size must be >= 1")


# NodeType -> ordered list of Attribute
AttributeSchema = dict


def schema_to_json(schema: AttributeSchema) -> dict:
    return {
        t.name: [{"name": a.name, "kind": a.kind, "size": a.size} for a in attrs]
        for t, attrs in sorted(schema.items())
    }


def schema_from_json(obj: dict) -> AttributeSchema:
    return {
        NodeType[t]: [Attribute(a["name"], a["kind"], int(a["size"])) for a in attrs]
        for t, attrs in obj.items()
    }


def init_embed_params(schema: AttributeSchema, n: int, m: int, attr_dim: int, rng) -> dict:
    """Embedding tables, numeric maps, per-type aggregation and predictor weights.

    Keys are stable strings; iteration order follows NodeType then schema order.
    """
    params = {}
    for ntype in NodeType:
        attrs = schema.get(ntype, [])
        for a in attrs:
            key = "emb" if a.kind == "categorical" else "num"
            params[f"{key}/{ntype.name}/{a.name}"] = glorot(rng, a.size, attr_dim)
        width = attr_dim * len(attrs)
        if width:
            params[f"agg_w/{ntype.name}"] = glorot(rng, width, n)
        params[f"agg_b/{ntype.name}"] = np.zeros((1, n))
        params[f"pred_w/{ntype.name}"] = glorot(rng, n, m)
        params[f"pred_b/{ntype.name}"] = np.zeros((1, m))
    return params


def validate_attributes(graph: HetGraph, schema: AttributeSchema, raw: dict) -> None:
    """Reject missing attributes, wrong shapes and out-of-vocabulary ids."""
    for ntype in NodeType:
        idx = graph.nodes_of(ntype)
        table = raw.get(ntype, {})
        for a in schema.get(ntype, []):
            if a.name not in table:
                raise FeatureError(f"missing attribute {a.name!r} for {ntype.name} nodes")
            col = np.asarray(table[a.name])
            if col.shape[0] != idx.shape[0]:
                raise FeatureError(
                    f"attribute {a.name!r} has {col.shape[0]} rows, {ntype.name} has {idx.shape[0]} nodes"
                )
            if a.kind == "categorical":
                bad = np.flatnonzero((col < 0) | (col >= a.size))
                if bad.size:
                    j = int(bad[0])
                    raise FeatureError(
                        f"node {int(idx[j])}: unknown category {int(col[j])} for attribute {a.name!r}"
                    )
            elif col.ndim != 2 or col.shape[1] != a.size:
                raise FeatureError(f"attribute {a.name!r}: expected vectors of dimension {a.size}")


def embed_attributes(graph: HetGraph, schema: AttributeSchema, raw: dict, params: dict):
    """Build X (|V| x n). Returns ``(X, cache)`` for the backward pass.

    ``raw[NodeType][attr]`` holds one row per node of that type, in ascending
    global node order. Each type's attributes are embedded, concatenated and
    mapped by that type's aggregation layer.
    """
    n = next(v.shape[1] for k, v in params.items() if k.startswith("agg_b/"))
    X = np.zeros((graph.num_nodes, n))
    cache = {}
    for ntype in NodeType:
        idx = graph.nodes_of(ntype)
        if idx.size == 0:
            continue
        attrs = schema.get(ntype, [])
        parts = []
        for a in attrs:
            col = raw[ntype][a.name]
            if a.kind == "categorical":
                parts.append(params[f"emb/{ntype.name}/{a.name}"][col])
            else:
                parts.append(np.asarray(col, dtype=np.float64) @ params[f"num/{ntype.name}/{a.name}"])
        out = np.broadcast_to(params[f"agg_b/{ntype.name}"], (idx.size, n)).copy()
        concat = None
        if parts:
            concat = np.concatenate(parts, axis=1)
            out += concat @ params[f"agg_w/{ntype.name}"]
        X[idx] = out
        cache[ntype] = concat
    return X, cache


def embed_backward(graph, schema, raw, params, cache, dX, grads) -> None:
    """Accumulate gradients of the embedding path into ``grads``."""
    for ntype in NodeType:
        idx = graph.nodes_of(ntype)
        if idx.size == 0:
            continue
        g = dX[idx]
        grads[f"agg_b/{ntype.name}"] += g.sum(axis=0, keepdims=True)
        concat = cache[ntype]
        if concat is None:
            continue
        w = params[f"agg_w/{ntype.name}"]
        grads[f"agg_w/{ntype.name}"] += concat.T @ g
        dconcat = g @ w.T
        start = 0
        for a in schema[ntype]:
            width = params[f"{'emb' if a.kind == 'categorical' else 'num'}/{ntype.name}/{a.name}"].shape[1]
            piece = dconcat[:, start:start + width]
            start += width
            if a.kind == "categorical":
                np.add.at(grads[f"emb/{ntype.name}/{a.name}"], raw[ntype][a.name], piece)
            else:
                grads[f"num/{ntype.name}/{a.name}"] += np.asarray(raw[ntype][a.name], dtype=np.float64).T @ piece


def predict_per_type(graph: HetGraph, X: np.ndarray, params: dict):
    """H[i] = ReLU(X[i] W_t + b_t) with t the type of node i; node order preserved."""
    m = next(v.shape[1] for k, v in params.items() if k.startswith("pred_b/"))
    pre = np.zeros((X.shape[0], m))
    for ntype in NodeType:
        idx = graph.nodes_of(ntype)
        if idx.size == 0:
            continue
        pre[idx] = X[idx] @ params[f"pred_w/{ntype.name}"] + params[f"pred_b/{ntype.name}"]
    H = relu(pre)
    return H, pre


def predict_backward(graph, X, params, pre, dH, grads) -> np.ndarray:
    """Accumulate predictor gradients; returns dL/dX."""
    dpre = relu_grad(pre, dH)
    dX = np.zeros_like(X)
    for ntype in NodeType:
        idx = graph.nodes_of(ntype)
        if idx.size == 0:
            continue
        g = dpre[idx]
        w = params[f"pred_w/{ntype.name}"]
        grads[f"pred_w/{ntype.name}"] += X[idx].T @ g
        grads[f"pred_b/{ntype.name}"] += g.sum(axis=0, keepdims=True)
        dX[idx] = g @ w.T
    return dX
