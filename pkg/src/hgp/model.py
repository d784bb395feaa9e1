"""HGP forward/backward: attributes -> X -> H -> per-relation propagation ->
attention fusion -> click logits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import features as feat
from .ctr import Pairs, bce_loss, bce_logit_grad, pair_logits
from .fusion import fuse_backward, fuse_forward, init_attn_params, stack_relations
from .hetgraph import EDGE_TYPES, HetGraph, normalized_adjacency
from .numerics import glorot, make_rng, sigmoid
from .propagation import PropagationConfig, hgp_backward, hgp_forward


@dataclass
class GraphContext:
    """Everything about the input graph the model reads but never trains."""

    graph: HetGraph
    schema: dict
    attributes: dict
    adjs: dict

    @classmethod
    def build(cls, graph, schema, attributes):
        feat.validate_attributes(graph, schema, attributes)
        adjs = {r: normalized_adjacency(graph, r) for r in EDGE_TYPES}
        return cls(graph, schema, attributes, adjs)


def prop_weight_names(K: int, tie: bool) -> list:
    return ["prop_w/0"] * K if tie else [f"prop_w/{k}" for k in range(K)]


def init_params(schema, *, n=16, m=16, attr_dim=8, K=10, d_k=16, d_v=8, z_dim=16,
                tie_weights=False, seed=0) -> dict:
    rng = make_rng([seed, 0])
    params = feat.init_embed_params(schema, n, m, attr_dim, rng)
    for name in dict.fromkeys(prop_weight_names(K, tie_weights)):
        params[name] = glorot(rng, m, m)
    params.update(init_attn_params(m, rng, d_k, d_v, z_dim))
    return params


class HGP:
    """Parameters plus the forward/backward composition of the full model."""

    def __init__(self, params: dict, alpha: float, K: int, tie_weights: bool = False):
        self.params = params
        self.pcfg = PropagationConfig(alpha, K)
        self.tie_weights = tie_weights
        self.weight_names = prop_weight_names(K, tie_weights)

    def _W(self):
        return [self.params[n] for n in self.weight_names]

    def forward(self, ctx: GraphContext, pairs: Pairs, layers=None):
        p = self.params
        X, ecache = feat.embed_attributes(ctx.graph, ctx.schema, ctx.attributes, p)
        H, pre = feat.predict_per_type(ctx.graph, X, p)
        nodes = np.unique(np.concatenate([pairs.users, pairs.items]))
        state = hgp_forward(ctx.adjs, H, self.pcfg, self._W(), targets=nodes, layers=layers)
        z, fcache = fuse_forward(stack_relations(state.Z), p)
        pu = np.searchsorted(nodes, pairs.users)
        pi = np.searchsorted(nodes, pairs.items)
        logits = pair_logits(z[pu], z[pi], X[pairs.users], X[pairs.items])
        cache = (X, ecache, pre, nodes, state, fcache, z, pu, pi)
        return logits, cache

    def predict(self, ctx: GraphContext, pairs: Pairs) -> np.ndarray:
        logits, _ = self.forward(ctx, pairs)
        return sigmoid(logits)

    def loss(self, ctx: GraphContext, pairs: Pairs, layers=None) -> float:
        logits, _ = self.forward(ctx, pairs, layers)
        return bce_loss(sigmoid(logits), pairs.labels)

    def reference_loss(self, ctx: GraphContext, pairs: Pairs, layers=None):
        """Unclamped mean cross-entropy in logit form, reduced in extended precision.

        Finite-difference checks divide loss differences by 2h, so the final
        reduction's rounding sets their noise floor; long double lowers it.
        """
        logits, _ = self.forward(ctx, pairs, layers)
        l = logits.astype(np.longdouble)
        y = pairs.labels.astype(np.longdouble)
        softplus = np.where(l > 0, l + np.log1p(np.exp(-np.abs(l))), np.log1p(np.exp(-np.abs(l))))
        return (softplus - y * l).mean()

    def relu_margin(self, ctx: GraphContext, pairs: Pairs) -> float:
        """Smallest |pre-activation| over every ReLU in the forward pass."""
        _, (X, ecache, pre, nodes, state, *_rest) = self.forward(ctx, pairs)
        margins = [np.abs(pre).min()]
        for r in EDGE_TYPES:
            for _Z, _A, U, _t in state.cache[r][1]:
                margins.append(np.abs(U).min())
        return float(min(margins))

    def loss_and_grads(self, ctx: GraphContext, pairs: Pairs, layers=None):
        logits, (X, ecache, pre, nodes, state, fcache, z, pu, pi) = self.forward(ctx, pairs, layers)
        probs = sigmoid(logits)
        loss = bce_loss(probs, pairs.labels)
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}

        dl = bce_logit_grad(probs, pairs.labels)[:, None]
        dz = np.zeros_like(z)
        np.add.at(dz, pu, dl * z[pi])
        np.add.at(dz, pi, dl * z[pu])
        dX = np.zeros_like(X)
        np.add.at(dX, pairs.users, dl * X[pairs.items])
        np.add.at(dX, pairs.items, dl * X[pairs.users])

        dY = fuse_backward(fcache, dz, self.params, grads)
        dZ = {r: dY[:, j, :] for j, r in enumerate(EDGE_TYPES)}
        dH, dW = hgp_backward(state, self.pcfg, self._W(), dZ)
        for name, g in zip(self.weight_names, dW):
            grads[name] += g
        dX += feat.predict_backward(ctx.graph, X, self.params, pre, dH, grads)
        feat.embed_backward(ctx.graph, ctx.schema, ctx.attributes, self.params, ecache, dX, grads)
        return loss, grads
