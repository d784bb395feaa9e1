"""Training loop, configuration and text checkpoints."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .ctr import Pairs, sample_negatives
from .features import schema_from_json, schema_to_json
from .hetgraph import EDGE_TYPES
from .metrics import evaluate_scores
from .model import HGP, GraphContext, init_params, prop_weight_names
from .numerics import RNG_ALGORITHM, Adam, make_rng
from .propagation import Layer
from .sampler import build_plan, sample_layer

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "hgp-checkpoint"
CHECKPOINT_VERSION = 1

# independent PCG64 sub-streams per seed
INIT_STREAM, SHUFFLE_STREAM, SAMPLE_STREAM = 0, 3, 2


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 1024
    alpha: float = 0.1
    K: int = 10
    n: int = 16
    m: int = 16
    attr_dim: int = 8
    d_k: int = 16
    d_v: int = 8
    z_dim: int = 16
    # 3e-7 in the original large-scale setting; desk-scale default below
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 30
    seed: int = 0
    neg_ratio: float = 1.0
    tie_weights: bool = False
    sampling: str = "auto"  # on | off | auto
    sampling_min_nodes: int = 50_000
    budget: int = 10240
    budget_scope: str = "step"  # step: budget per propagation step; batch: split over the K steps
    sample_per: str = "step"  # step: fresh draw each step; batch: one draw reused by all steps
    threshold: float = 0.5
    eval_every: int = 1

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0 or self.K < 0:
            raise ValueError("batch_size >= 1, epochs >= 0 and K >= 0 required")
        for name in ("alpha", "lr", "neg_ratio", "n", "m", "attr_dim", "d_k", "d_v", "z_dim", "budget"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.sampling not in ("on", "off", "auto"):
            raise ValueError(f"sampling must be on, off or auto, got {self.sampling!r}")
        if self.budget_scope not in ("step", "batch") or self.sample_per not in ("step", "batch"):
            raise ValueError("budget_scope and sample_per take 'step' or 'batch'")

    @classmethod
    def keys(cls) -> tuple:
        return tuple(f.name for f in fields(cls))

    def to_dict(self) -> dict:
        return asdict(self)

    def model_dict(self) -> dict:
        keys = ("alpha", "K", "n", "m", "attr_dim", "d_k", "d_v", "z_dim", "tie_weights")
        return {k: getattr(self, k) for k in keys}


@dataclass
class TrainedModel:
    params: dict
    config: TrainConfig
    schema: dict

    @classmethod
    def fresh(cls, cfg: TrainConfig, schema: dict) -> "TrainedModel":
        params = init_params(schema, n=cfg.n, m=cfg.m, attr_dim=cfg.attr_dim, K=cfg.K, d_k=cfg.d_k,
                             d_v=cfg.d_v, z_dim=cfg.z_dim, tie_weights=cfg.tie_weights, seed=cfg.seed)
        return cls(params, cfg, schema)

    def net(self) -> HGP:
        return HGP(self.params, self.config.alpha, self.config.K, self.config.tie_weights)

    def fingerprint(self) -> str:
        blob = json.dumps({"model": self.config.model_dict(), "schema": schema_to_json(self.schema),
                           "edge_types": [r.name for r in EDGE_TYPES]}, sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def copy(self) -> "TrainedModel":
        return TrainedModel({k: v.copy() for k, v in self.params.items()}, self.config, self.schema)


class TrainingDiverged(RuntimeError):
    def __init__(self, message, last_good: TrainedModel, history: list):
        super().__init__(message)
        self.last_good = last_good
        self.history = history


def use_sampling(cfg: TrainConfig, num_nodes: int) -> bool:
    if cfg.sampling == "auto":
        return num_nodes >= cfg.sampling_min_nodes
    return cfg.sampling == "on"


def evaluate(model: TrainedModel, ctx: GraphContext, pairs: Pairs, threshold: float | None = None):
    probs = model.net().predict(ctx, pairs)
    return evaluate_scores(probs, pairs.labels, model.config.threshold if threshold is None else threshold)


class _LayerSampler:
    def __init__(self, cfg: TrainConfig, ctx: GraphContext):
        budget = cfg.budget if cfg.budget_scope == "step" else max(1, cfg.budget // max(cfg.K, 1))
        self.plans = {r: build_plan(ctx.graph, r, budget, max(cfg.K, 1)) for r in EDGE_TYPES}
        self.K = cfg.K
        self.per_batch = cfg.sample_per == "batch"
        self.rng = make_rng([cfg.seed, SAMPLE_STREAM])

    def draw(self) -> dict:
        layers = {}
        for r in EDGE_TYPES:
            plan = self.plans[r]
            if self.per_batch:
                one = Layer(*sample_layer(plan, 0, self.rng))
                layers[r] = [one] * self.K
            else:
                layers[r] = [Layer(*sample_layer(plan, k, self.rng)) for k in range(self.K)]
        return layers


def train(cfg: TrainConfig, ctx: GraphContext, train_pos: Pairs, validation: Pairs | None = None,
          model: TrainedModel | None = None, on_batch=None, on_epoch=None):
    """Minibatch Adam on cross-entropy over training positives plus fresh negatives.

    Returns ``(final model, best-by-validation model, history)``; history holds
    one dict per epoch with the training loss and validation metrics.
    """
    if len(train_pos) == 0:
        raise ValueError("no training positives")
    train_pos.check_types(ctx.graph)
    model = model or TrainedModel.fresh(cfg, ctx.schema)
    net = model.net()
    opt = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    rng = make_rng([cfg.seed, SHUFFLE_STREAM])
    sampler = _LayerSampler(cfg, ctx) if use_sampling(cfg, ctx.graph.num_nodes) and cfg.K else None
    history, timings = [], []
    best, best_auc = model.copy(), -math.inf

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        neg = sample_negatives(ctx.graph, train_pos, cfg.neg_ratio, rng)
        pairs = train_pos.concat(neg)
        order = rng.permutation(len(pairs))
        total, count = 0.0, 0
        for start in range(0, len(pairs), cfg.batch_size):
            batch = pairs.take(order[start:start + cfg.batch_size])
            layers = sampler.draw() if sampler else None
            loss, grads = net.loss_and_grads(ctx, batch, layers)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss in epoch {epoch}", model.copy(), history)
            if on_batch is not None:
                on_batch(epoch, loss, grads)
            opt.step(model.params, grads)
            total += loss * len(batch)
            count += len(batch)
        rec = {"epoch": epoch, "train_loss": total / count}
        if validation is not None and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            rep = evaluate(model, ctx, validation)
            rec.update(val_roc_auc=rep.roc_auc, val_pr_auc=rep.pr_auc, val_f1=rep.f1)
            if rep.roc_auc > best_auc:
                best_auc, best = rep.roc_auc, model.copy()
        history.append(rec)
        timings.append({"epoch": epoch, "wall_seconds": time.perf_counter() - t0})
        log.info("epoch %d loss %.5f val_auc %s", epoch, rec["train_loss"], rec.get("val_roc_auc"))
        if on_epoch is not None:
            on_epoch(rec, timings[-1])
    if validation is None or not math.isfinite(best_auc):
        best = model.copy()
    return model, best, history


def history_line(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True)


# ---------------------------------------------------------------- checkpoints


class CheckpointError(ValueError):
    pass


def _fmt(x) -> str:
    return format(float(x), ".17g")


def checkpoint_text(model: TrainedModel) -> str:
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}",
             f"fingerprint {model.fingerprint()}",
             "config " + json.dumps(model.config.to_dict(), sort_keys=True),
             "schema " + json.dumps(schema_to_json(model.schema), sort_keys=True),
             "edge_types " + ",".join(r.name for r in EDGE_TYPES),
             "rng " + RNG_ALGORITHM,
             f"params {len(model.params)}"]
    for name, p in model.params.items():
        rows, cols = p.shape
        lines.append(f"param {name} {rows} {cols}")
        for row in p:
            lines.append(" ".join(_fmt(x) for x in row))
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_checkpoint(model: TrainedModel, path) -> None:
    Path(path).write_text(checkpoint_text(model), encoding="utf-8")


def _expect(lines, i, key):
    if i >= len(lines) or not lines[i].startswith(key + " "):
        raise CheckpointError(f"checkpoint header field {key!r} missing or malformed")
    return lines[i][len(key) + 1:]


def load_checkpoint(path, cfg: TrainConfig | None = None) -> TrainedModel:
    """Parse a checkpoint; with ``cfg`` also check its parameter layout against that config."""
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    head = lines[0].split() if lines else []
    if len(head) != 2 or head[0] != CHECKPOINT_MAGIC:
        raise CheckpointError("not an hgp checkpoint (field 'magic')")
    if head[1] != str(CHECKPOINT_VERSION):
        raise CheckpointError(f"checkpoint version {head[1]} unsupported (field 'version')")
    fp = _expect(lines, 1, "fingerprint")
    try:
        saved_cfg = TrainConfig(**json.loads(_expect(lines, 2, "config")))
        schema = schema_from_json(json.loads(_expect(lines, 3, "schema")))
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"cannot parse checkpoint config/schema: {exc}") from None
    order = _expect(lines, 4, "edge_types").split(",")
    if order != [r.name for r in EDGE_TYPES]:
        raise CheckpointError(f"edge type order {order} differs from {[r.name for r in EDGE_TYPES]} (field 'edge_types')")
    _expect(lines, 5, "rng")
    try:
        count = int(_expect(lines, 6, "params"))
    except ValueError:
        raise CheckpointError("parameter count unreadable (field 'params')") from None

    params = {}
    i = 7
    for _ in range(count):
        if i >= len(lines) or not lines[i].startswith("param "):
            raise CheckpointError(f"incomplete checkpoint: expected {count} parameter blocks, found {len(params)}")
        parts = lines[i].split()
        if len(parts) != 4:
            raise CheckpointError(f"malformed parameter header {lines[i]!r}")
        name, rows, cols = parts[1], int(parts[2]), int(parts[3])
        block = lines[i + 1:i + 1 + rows]
        vals = [row.split() for row in block]
        if len(block) != rows or any(len(v) != cols for v in vals):
            raise CheckpointError(f"incomplete block {name!r}: expected {rows}x{cols} values")
        try:
            params[name] = np.array([[float(x) for x in v] for v in vals], dtype=np.float64).reshape(rows, cols)
        except ValueError:
            raise CheckpointError(f"unparseable value in block {name!r}") from None
        i += 1 + rows
    if i >= len(lines) or lines[i] != "end":
        raise CheckpointError("incomplete checkpoint: missing 'end' marker")

    model = TrainedModel(params, saved_cfg, schema)
    if model.fingerprint() != fp:
        raise CheckpointError("fingerprint does not match config and schema (field 'fingerprint')")
    if cfg is not None:
        _check_layout(model, cfg)
    return model


def _check_layout(model: TrainedModel, cfg: TrainConfig) -> None:
    want = TrainedModel.fresh(cfg, model.schema).params
    have_prop = [k for k in model.params if k.startswith("prop_w/")]
    want_prop = list(dict.fromkeys(prop_weight_names(cfg.K, cfg.tie_weights)))
    if len(have_prop) != len(want_prop):
        raise CheckpointError(f"PropWeights count mismatch: checkpoint has {len(have_prop)}, "
                              f"config expects {len(want_prop)}")
    for name, w in want.items():
        if name not in model.params:
            raise CheckpointError(f"missing parameter {name!r}")
        if model.params[name].shape != w.shape:
            raise CheckpointError(f"shape mismatch for {name!r}: checkpoint {model.params[name].shape}, "
                                  f"config expects {w.shape}")
    extra = set(model.params) - set(want)
    if extra:
        raise CheckpointError(f"unexpected parameter {sorted(extra)[0]!r}")
