"""Acceptance criteria 1-10. Each test prints one PASS/FAIL line; the lines are
repeated in the terminal summary under "acceptance criteria".

Criteria 7 and 8 train many models and take about 25 minutes together on one core.
"""

import json
import time
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from hgp.datagen import GenConfig, generate
from hgp.experiment import model_H, prepare, read_config, run_training, smoothing_contrast, split_config, sweep_k
from hgp.gradcheck import GROUPS, failing, run_grad_check
from hgp.hetgraph import EdgeType, normalized_adjacency, spectral_radius_estimate, spmm
from hgp.metrics import pr_auc, roc_auc
from hgp.numerics import make_rng
from hgp.propagation import PropagationConfig, appnp_propagate, fixed_point_solve
from hgp.sampler import build_plan, sample_layer, sampled_spmm
from hgp.trainer import CheckpointError, TrainConfig, TrainedModel, load_checkpoint, save_checkpoint, train

from conftest import ACCEPTANCE_LINES, dense_norm_adj, random_tripartite

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@contextmanager
def criterion(n, title, limit):
    """Collects pass/fail for one criterion; the runtime bound is part of passing."""
    rec = {"ok": False, "detail": ""}
    t0 = time.perf_counter()
    try:
        yield rec
    except Exception as exc:
        rec["ok"] = False
        rec["detail"] = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        secs = time.perf_counter() - t0
        in_time = secs < limit
        ok = rec["ok"] and in_time
        rec["passed"] = ok
        timing = f"{secs:.1f}s < {limit:g}s" if in_time else f"{secs:.1f}s exceeds {limit:g}s"
        line = f"{'PASS' if ok else 'FAIL'} [{n}] {title}: {rec['detail']} ({timing})"
        ACCEPTANCE_LINES.append(line)
        print(line)


def check(rec):
    assert rec["passed"], rec["detail"]


def test_criterion_01_normalization_oracle():
    with criterion(1, "normalization oracle", 10) as rec:
        rng = make_rng(101)
        worst_err, worst_rho = 0.0, 0.0
        for _ in range(100):
            sizes = rng.integers(1, 67, 3)
            g = random_tripartite(rng, *(int(s) for s in sizes), p_gu=rng.uniform(0.02, 0.3),
                                  p_iu=rng.uniform(0.02, 0.3))
            assert g.num_nodes <= 200
            for r in EdgeType:
                A = normalized_adjacency(g, r)
                worst_err = max(worst_err, np.abs(A.toarray() - dense_norm_adj(g, r)).max())
                worst_rho = max(worst_rho, spectral_radius_estimate(A))
        rec["ok"] = worst_err <= 1e-12 and worst_rho <= 1 + 1e-9
        rec["detail"] = f"max entry error {worst_err:.2e} (<= 1e-12), max spectral radius {worst_rho:.12f} (<= 1+1e-9)"
    check(rec)


def test_criterion_02_appnp_fixed_point():
    with criterion(2, "APPNP fixed point", 10) as rec:
        rng = make_rng(202)
        worst = 0.0
        exact_alpha_one = True
        for _ in range(20):
            g = random_tripartite(rng, 10, 25, 15, 0.15, 0.15)
            assert g.num_nodes == 50
            A = normalized_adjacency(g, EdgeType.ItemUser)
            H = rng.standard_normal((50, 4))
            Z = appnp_propagate(A, H, PropagationConfig(0.1, 200))
            worst = max(worst, np.abs(Z - fixed_point_solve(A, H, 0.1)).max())
            exact_alpha_one &= np.array_equal(appnp_propagate(A, H, PropagationConfig(1.0, 10)), H)
        rec["ok"] = worst <= 1e-8 and exact_alpha_one
        rec["detail"] = f"max |K=200 - fixed point| {worst:.2e} (<= 1e-8), alpha=1 bit-exact {exact_alpha_one}"
    check(rec)


def test_criterion_03_gradient_integrity():
    with criterion(3, "gradient integrity", 120) as rec:
        report = run_grad_check(seed=0, K=3, h=1e-5)
        bad = failing(report, 1e-4)
        covered = set(report["groups"])
        steps = all(f"prop_w/{k}" in report["params"] for k in range(report["K"]))
        rec["ok"] = not bad and covered == {g for g, _ in GROUPS} and steps and report["nodes"] == 30
        rec["detail"] = (f"{report['nodes']} nodes, {len(report['params'])} parameters in groups "
                         f"{sorted(covered)}, max relative error {report['max_rel_error']:.2e} (<= 1e-4), "
                         f"ReLU margin {report['relu_margin']:.1e}")
    check(rec)


def test_criterion_04_oversmoothing_contrast():
    with criterion(4, "oversmoothing contrast", 60) as rec:
        rows = []
        for seed in range(5):
            ds = generate(GenConfig(seed=seed))
            prep = prepare(ds)
            model = TrainedModel.fresh(TrainConfig(seed=seed), ds.schema)
            c = smoothing_contrast(prep.ctx, model_H(model, prep.ctx), ds.truth, K=10, alpha=0.1)
            rows.append((seed, c["plain_cosine"], c["appnp_cosine"]))
        rec["ok"] = all(p > a for _, p, a in rows)
        rec["detail"] = "; ".join(f"seed {s} plain {p:.4f} > appnp {a:.4f}" for s, p, a in rows)
    check(rec)


def brute_auc(s, y):
    pos, neg = s[y == 1], s[y == 0]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (pos.size * neg.size)


def brute_ap(s, y):
    """Pairwise ranks (ties by input order), then precision at each positive."""
    idx = np.arange(s.size)
    before = (s[None, :] > s[:, None]) | ((s[None, :] == s[:, None]) & (idx[None, :] < idx[:, None]))
    rank = 1 + before.sum(axis=1)
    pos = np.flatnonzero(y == 1)
    hits = (rank[pos][None, :] <= rank[pos][:, None]).sum(axis=1)
    return float(np.mean(hits / rank[pos]))


def test_criterion_05_metric_oracles():
    with criterion(5, "metric oracles", 30) as rec:
        rng = make_rng(505)
        worst_roc = worst_ap = 0.0
        invariant = True
        for _ in range(200):
            n = int(rng.integers(2, 1001))
            y = rng.integers(0, 2, n)
            y[0], y[1] = 1, 0
            s = np.round(rng.random(n), int(rng.integers(1, 4)))
            auc = roc_auc(s, y)
            worst_roc = max(worst_roc, abs(auc - brute_auc(s, y)))
            worst_ap = max(worst_ap, abs(pr_auc(s, y) - brute_ap(s, y)))
            invariant &= roc_auc(np.exp(s), y) == auc and roc_auc(3.0 * s - 7.0, y) == auc
        rec["ok"] = worst_roc <= 1e-12 and worst_ap <= 1e-12 and invariant
        rec["detail"] = (f"max ROC-AUC error {worst_roc:.1e}, max AP error {worst_ap:.1e} (<= 1e-12), "
                         f"exp/affine invariance exact {invariant}")
    check(rec)


def test_criterion_06_sampling_unbiased():
    with criterion(6, "sampling unbiasedness", 120) as rec:
        rng = make_rng(606)
        g = random_tripartite(rng, 10, 60, 30, 0.08, 0.08)
        assert g.num_nodes == 100
        adj = normalized_adjacency(g, EdgeType.ItemUser)
        M = rng.standard_normal((100, 3))
        exact = spmm(adj, M)
        plan = build_plan(g, EdgeType.ItemUser, 30, 1)
        srng = make_rng(607)
        acc = np.zeros_like(exact)
        acc2 = np.zeros_like(exact)
        quotas_ok = True
        draws = 10000
        for _ in range(draws):
            nodes, w = sample_layer(plan, 0, srng)
            types = g.node_types[nodes]
            quotas_ok &= all(int((types == t).sum()) == q for t, q in plan.quotas[0].items())
            est = sampled_spmm(adj, M[nodes], nodes, w)
            acc += est
            acc2 += est * est
        mean = acc / draws
        se = np.sqrt(np.maximum(acc2 / draws - mean**2, 0.0) / draws)
        err = np.abs(mean - exact).max()
        full = build_plan(g, EdgeType.ItemUser, g.num_nodes, 1)
        nodes, w = sample_layer(full, 0, make_rng(608))
        bitwise = np.array_equal(sampled_spmm(adj, M[nodes], nodes, w), exact)
        sizes = {t: (g.node_types == t).sum() for t in plan.quotas[0]}
        proportional = all(abs(q - 30 * sizes[t] / sum(sizes.values())) < 1 for t, q in plan.quotas[0].items())
        rec["ok"] = err <= 3 * se.max() and bitwise and quotas_ok and proportional
        rec["detail"] = (f"max-norm error {err:.2e} vs 3 SE {3 * se.max():.2e}, exhaustive bitwise {bitwise}, "
                         f"quotas {dict((t.name, q) for t, q in plan.quotas[0].items())} realized {quotas_ok}")
    check(rec)


def configs(name):
    return split_config(read_config(CONFIGS / name))


@pytest.mark.slow
def test_criterion_07_end_to_end_learning(tmp_path):
    with criterion(7, "end-to-end learning signal", 900) as rec:
        gen, cfg = configs("standard.json")
        assert (cfg.K, cfg.alpha, cfg.epochs, cfg.lr) == (10, 0.1, 30, 1e-3)
        aucs, oracles = [], []
        for seed in range(3):
            ds = generate(replace(gen, seed=seed))
            res = run_training(prepare(ds), replace(cfg, seed=seed))
            aucs.append(res["report"]["test"]["roc_auc"])
            oracles.append(ds.manifest["oracle_auc"])
        mean, oracle = float(np.mean(aucs)), float(np.mean(oracles))
        floor = max(oracle - 0.20, 0.70)
        rec["ok"] = mean >= floor
        rec["detail"] = (f"test ROC-AUC {', '.join(f'{a:.4f}' for a in aucs)} mean {mean:.4f} >= {floor:.4f} "
                         f"(mean oracle {oracle:.4f} - 0.20, at least 0.70)")
    check(rec)


@pytest.mark.slow
def test_criterion_08_depth_trend(tmp_path):
    with criterion(8, "propagation depth trend", 3600) as rec:
        gen, cfg = configs("sweep.json")
        res = sweep_k(gen, cfg, ks=(1, 3, 10), seeds=range(5), out=tmp_path)
        auc = {row["k"]: row["roc_auc"] for row in res["summary"]}
        rec["ok"] = auc[3] > auc[1] and auc[10] >= auc[3] - 0.01
        rec["detail"] = (f"mean ROC-AUC k=1 {auc[1]:.4f}, k=3 {auc[3]:.4f}, k=10 {auc[10]:.4f}; "
                         f"k=3 > k=1 {auc[3] > auc[1]}, k=10 >= k=3 - 0.01 {auc[10] >= auc[3] - 0.01}")
        print((tmp_path / "sweep_runs.csv").read_text())
    check(rec)


def test_criterion_09_determinism(tmp_path):
    with criterion(9, "determinism", 300) as rec:
        gen, cfg = configs("standard.json")
        prep = prepare(generate(gen))
        cfg = replace(cfg, epochs=3)
        files = ("history.jsonl", "model.ckpt", "best.ckpt", "report.json")
        for run in ("a", "b"):
            run_training(prep, cfg, tmp_path / run)
        same = {f: (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files}
        lines = (tmp_path / "a" / "history.jsonl").read_text().splitlines()
        rec["ok"] = all(same.values()) and len(lines) == 3
        rec["detail"] = ", ".join(f"{f} identical {v}" for f, v in same.items()) + " (standard config, 3 epochs)"
    check(rec)


def test_criterion_10_checkpoint_round_trip(tmp_path):
    with criterion(10, "checkpoint round trip", 5) as rec:
        ds = generate(GenConfig(seed=0, groups=10, users=60, items=30, communities=3, p_in=0.3, p_out=0.03))
        prep = prepare(ds)
        cfg = TrainConfig(K=10, epochs=1, batch_size=64, lr=1e-2)
        model, _, _ = train(cfg, prep.ctx, prep.splits.train)
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(model, a)
        back = load_checkpoint(a)
        save_checkpoint(back, b)
        identical = a.read_bytes() == b.read_bytes()
        errors = []
        for other in (TrainConfig(K=5), TrainConfig(K=10, m=8)):
            try:
                load_checkpoint(a, other)
                errors.append(None)
            except CheckpointError as exc:
                errors.append(str(exc))
        named = errors[0] is not None and "PropWeights count mismatch" in errors[0] \
            and errors[1] is not None and "'pred_w/Group'" in errors[1]
        rec["ok"] = identical and named
        rec["detail"] = f"save-load-save identical {identical}; rejections {json.dumps(errors)}"
    check(rec)
