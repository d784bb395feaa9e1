"""Run-level plumbing shared by the CLI and the acceptance suite: flat JSON
configs, single training runs with their output files, the k sweep and the
oversmoothing diagnostic."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .datagen import GenConfig, generate
from .dataset import Dataset, Splits
from .features import predict_per_type, embed_attributes
from .hetgraph import EdgeType, NodeType, normalized_adjacency
from .model import GraphContext, prop_weight_names
from .propagation import PropagationConfig, appnp_propagate, hgp_propagate, plain_propagate, row_cosine_stats
from .trainer import (TrainConfig, TrainedModel, evaluate, history_line, save_checkpoint, train)

log = logging.getLogger(__name__)

DIAGNOSTIC_RELATION = EdgeType.ItemUser
DEFAULT_KS = (1, 2, 3, 5, 10)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)


class ConfigError(ValueError):
    pass


def split_config(flat: dict) -> tuple[GenConfig, TrainConfig]:
    """Flat key/value config -> (GenConfig, TrainConfig); ``seed`` feeds both."""
    gen_keys, train_keys = set(GenConfig.keys()), set(TrainConfig.keys())
    unknown = sorted(set(flat) - gen_keys - train_keys)
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")
    gen = {k: v for k, v in flat.items() if k in gen_keys}
    tr = {k: v for k, v in flat.items() if k in train_keys}
    try:
        return GenConfig(**gen), TrainConfig(**tr)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def read_config(path) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object of flat keys")
    return obj


def effective_config(gen: GenConfig, tr: TrainConfig) -> dict:
    out = gen.to_dict()
    out.update(tr.to_dict())
    return dict(sorted(out.items()))


@dataclass
class Prepared:
    dataset: Dataset
    splits: Splits
    ctx: GraphContext


def prepare(dataset: Dataset) -> Prepared:
    sp = dataset.splits()
    sp.check_disjoint()
    ctx = GraphContext.build(sp.train_graph, dataset.schema, dataset.attributes)
    return Prepared(dataset, sp, ctx)


def community_cosine(Z: np.ndarray, graph, truth) -> float:
    """Mean over communities of the mean pairwise row cosine among that community's users."""
    users = graph.nodes_of(NodeType.User)
    comm = truth.community[users]
    vals = []
    for c in np.unique(comm):
        members = users[comm == c]
        if members.size >= 2:
            try:
                vals.append(row_cosine_stats(Z, members).mean)
            except ValueError:
                continue
    if not vals:
        raise ValueError("no community has two users with nonzero rows")
    return float(np.mean(vals))


def model_H(model: TrainedModel, ctx: GraphContext) -> np.ndarray:
    X, _ = embed_attributes(ctx.graph, ctx.schema, ctx.attributes, model.params)
    H, _ = predict_per_type(ctx.graph, X, model.params)
    return H


def smoothing_contrast(ctx: GraphContext, H: np.ndarray, truth, K: int, alpha: float = 0.1) -> dict:
    """Within-community user cosine after K plain steps vs K teleporting steps."""
    adj = normalized_adjacency(ctx.graph, DIAGNOSTIC_RELATION)
    plain = plain_propagate(adj, H, K)
    appnp = appnp_propagate(adj, H, PropagationConfig(alpha, K))
    return {"plain_cosine": community_cosine(plain, ctx.graph, truth),
            "appnp_cosine": community_cosine(appnp, ctx.graph, truth)}


def hgp_cosine(model: TrainedModel, ctx: GraphContext, truth) -> float:
    cfg = model.config
    W = [model.params[n] for n in prop_weight_names(cfg.K, cfg.tie_weights)]
    state = hgp_propagate(ctx.adjs, model_H(model, ctx), PropagationConfig(cfg.alpha, cfg.K), W)
    return community_cosine(state.Z[DIAGNOSTIC_RELATION], ctx.graph, truth)


def run_training(prep: Prepared, cfg: TrainConfig, out: Path | None = None, on_epoch=None) -> dict:
    """Train, score the test split with the final and the validation-selected
    model, and optionally write config / history / timing / checkpoints / report."""
    hist_fh = timing_fh = None
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        hist_fh = open(out / "history.jsonl", "w", encoding="utf-8")
        timing_fh = open(out / "timing.jsonl", "w", encoding="utf-8")

    def epoch_cb(rec, timing):
        if hist_fh:
            hist_fh.write(history_line(rec) + "\n")
            timing_fh.write(json.dumps(timing, sort_keys=True) + "\n")
        if on_epoch:
            on_epoch(rec, timing)

    try:
        final, best, history = train(cfg, prep.ctx, prep.splits.train, prep.splits.validation, on_epoch=epoch_cb)
    finally:
        if hist_fh:
            hist_fh.close()
            timing_fh.close()
    rep_final = evaluate(final, prep.ctx, prep.splits.test)
    rep_best = evaluate(best, prep.ctx, prep.splits.test)
    report = {"test": rep_best.to_dict(), "test_final_model": rep_final.to_dict(), "selection": "best_val_roc_auc",
              "epochs": len(history)}
    if "oracle_auc" in prep.dataset.manifest:
        report["oracle_auc"] = prep.dataset.manifest["oracle_auc"]
    if out is not None:
        save_checkpoint(final, out / "model.ckpt")
        save_checkpoint(best, out / "best.ckpt")
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return {"final": final, "best": best, "history": history, "report": report}


SWEEP_COLUMNS = ("k", "roc_auc", "pr_auc", "f1", "plain_cosine", "hgp_cosine")


def sweep_k(gen: GenConfig, cfg: TrainConfig, ks=DEFAULT_KS, seeds=DEFAULT_SEEDS, out: Path | None = None,
            dataset: Dataset | None = None, progress=None) -> dict:
    """Retrain per (seed, k) and report mean test metrics per k.

    Each seed regenerates the synthetic dataset with that seed unless a fixed
    ``dataset`` is given, in which case only the training seed varies.
    """
    runs = []
    for seed in seeds:
        ds = dataset if dataset is not None else generate(replace(gen, seed=int(seed)))
        prep = prepare(ds)
        for k in ks:
            c = replace(cfg, K=int(k), seed=int(seed))
            res = run_training(prep, c)
            row = {"seed": int(seed), "k": int(k)}
            row.update({m: res["report"]["test"][m] for m in ("roc_auc", "pr_auc", "f1")})
            if ds.truth is not None:
                H = model_H(res["best"], prep.ctx)
                adj = normalized_adjacency(prep.ctx.graph, DIAGNOSTIC_RELATION)
                row["plain_cosine"] = community_cosine(plain_propagate(adj, H, int(k)), prep.ctx.graph, ds.truth)
                row["hgp_cosine"] = hgp_cosine(res["best"], prep.ctx, ds.truth)
            else:
                row["plain_cosine"] = row["hgp_cosine"] = float("nan")
            runs.append(row)
            log.info("sweep seed %d k %d roc_auc %.4f", seed, k, row["roc_auc"])
            if progress:
                progress(row)
    summary = []
    for k in ks:
        rows = [r for r in runs if r["k"] == int(k)]
        summary.append({"k": int(k), **{m: float(np.mean([r[m] for r in rows])) for m in SWEEP_COLUMNS[1:]}})
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "sweep.csv", SWEEP_COLUMNS, summary)
        _write_csv(out / "sweep_runs.csv", ("seed",) + SWEEP_COLUMNS, runs)
    return {"summary": summary, "runs": runs}


def _fmt(v):
    return format(v, ".17g") if isinstance(v, float) else str(v)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
