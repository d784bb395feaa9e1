"""Finite-difference check of the full model on a small synthetic instance."""

from __future__ import annotations

import time

from .ctr import sample_negatives
from .datagen import GenConfig, generate
from .model import HGP, GraphContext, init_params
from .numerics import finite_diff_check, make_rng

# 5 + 17 + 8 = 30 nodes
TINY = dict(groups=5, users=17, items=8, communities=2, memberships=1.5, p_in=0.5, p_out=0.1)

GROUPS = (
    ("embedding", ("emb/", "num/", "agg_w/", "agg_b/")),
    ("predictor", ("pred_w/", "pred_b/")),
    ("propagation", ("prop_w/",)),
    ("attention", ("attn_wq", "attn_wk", "attn_wv")),
    ("fusion", ("fuse_w", "fuse_b")),
)


def group_of(name: str) -> str:
    for group, prefixes in GROUPS:
        if name.startswith(prefixes):
            return group
    raise KeyError(name)


def tiny_instance(seed: int = 0):
    ds = generate(GenConfig(seed=seed, **TINY))
    ctx = GraphContext.build(ds.graph, ds.schema, ds.attributes)
    neg = sample_negatives(ds.graph, ds.positives, 1.0, make_rng([seed, 1]))
    return ctx, ds.positives.concat(neg)


def run_grad_check(seed: int = 0, K: int = 3, alpha: float = 0.1, h: float = 1e-5, min_margin: float = 1e-4,
                   tie_weights: bool = False, attempts: int = 50) -> dict:
    """Max relative error per parameter, analytic vs central differences.

    Parameter draws are redrawn until every ReLU input sits at least
    ``min_margin`` from the kink, so a step of ``h`` never crosses it. The
    numeric side differentiates the extended-precision loss, whose rounding
    noise is far below the analytic gradients' scale.
    """
    t0 = time.perf_counter()
    ctx, pairs = tiny_instance(seed)
    for attempt in range(attempts):
        params = init_params(ctx.schema, K=K, tie_weights=tie_weights, seed=seed * 1000 + attempt)
        net = HGP(params, alpha, K, tie_weights)
        margin = net.relu_margin(ctx, pairs)
        if margin >= min_margin:
            break
    else:
        raise RuntimeError(f"no parameter draw with ReLU margin >= {min_margin} in {attempts} attempts")
    _, grads = net.loss_and_grads(ctx, pairs)
    report = finite_diff_check(lambda: net.reference_loss(ctx, pairs), params, grads, h)
    groups = {}
    for name, err in report.items():
        g = group_of(name)
        groups[g] = max(groups.get(g, 0.0), err)
    return {
        "nodes": int(ctx.graph.num_nodes),
        "pairs": len(pairs),
        "K": K,
        "h": h,
        "relu_margin": margin,
        "draw": attempt,
        "max_rel_error": max(report.values()),
        "groups": groups,
        "params": report,
        "seconds": time.perf_counter() - t0,
    }


def failing(report: dict, tol: float = 1e-4) -> list:
    return sorted(name for name, err in report["params"].items() if not err <= tol)


def summary(report: dict) -> dict:
    keys = ("nodes", "pairs", "K", "h", "relu_margin", "max_rel_error", "groups")
    return {k: report[k] for k in keys}

