"""Command line: generate | train | evaluate | sweep-k | grad-check.

Every command prints one JSON object on stdout. Failures print
``{"error": ..., "message": ...}`` and exit with status 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .dataset import load_dataset, save_dataset
from .datagen import generate
from .gradcheck import failing, run_grad_check, summary
from .trainer import evaluate, load_checkpoint

OVERRIDES = ("seed", "alpha", "epochs", "sampling", "budget", "lr", "threshold")


def _int_list(text: str) -> list:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hgp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=False):
        sp.add_argument("--config", type=Path, help="flat JSON config (generator and training keys)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=Path, required=out_required)

    def training(sp):
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--sampling", choices=("on", "off", "auto"))
        sp.add_argument("--budget", type=int)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--threshold", type=float)

    g = sub.add_parser("generate", help="write a synthetic dataset directory")
    common(g, out_required=True)

    t = sub.add_parser("train", help="train on a dataset directory (or a freshly generated one)")
    common(t, out_required=True)
    t.add_argument("--data", type=Path, help="dataset directory; generated from the config when omitted")
    t.add_argument("--k", type=int, help="propagation steps K")
    training(t)

    e = sub.add_parser("evaluate", help="score a checkpoint on the test split")
    common(e)
    e.add_argument("--data", type=Path, help="dataset directory; generated from the config when omitted")
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--threshold", type=float)

    s = sub.add_parser("sweep-k", help="retrain per k and seed, write sweep.csv")
    common(s, out_required=True)
    s.add_argument("--data", type=Path, help="fixed dataset directory; otherwise one generated per seed")
    s.add_argument("--k", type=_int_list, default=list(ex.DEFAULT_KS), help="comma-separated k values")
    s.add_argument("--seeds", type=_int_list, default=list(ex.DEFAULT_SEEDS), help="comma-separated seeds")
    training(s)

    c = sub.add_parser("grad-check", help="finite-difference check of every parameter on a 30-node instance")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--k", type=int, default=3)
    c.add_argument("--h", type=float, default=1e-5)
    c.add_argument("--tol", type=float, default=1e-4)
    c.add_argument("--out", type=Path)
    return p


def _configs(args):
    flat = ex.read_config(args.config)
    for name in OVERRIDES:
        val = getattr(args, name, None)
        if val is not None:
            flat[name] = val
    if getattr(args, "k", None) is not None and isinstance(args.k, int):
        flat["K"] = args.k
    return ex.split_config(flat)


def _dataset(args, gen):
    return load_dataset(args.data) if args.data else generate(gen)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_generate(args) -> dict:
    gen, _ = _configs(args)
    ds = generate(gen)
    save_dataset(ds, args.out)
    return {"command": "generate", "out": str(args.out), "counts": ds.manifest["counts"],
            "oracle_auc": ds.manifest["oracle_auc"]}


def cmd_train(args) -> dict:
    gen, cfg = _configs(args)
    ds = _dataset(args, gen)
    prep = ex.prepare(ds)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_json(args.out / "config.json", ex.effective_config(gen, cfg))
    res = ex.run_training(prep, cfg, args.out)
    return {"command": "train", "out": str(args.out), "epochs": len(res["history"]),
            "final_train_loss": res["history"][-1]["train_loss"] if res["history"] else None,
            "test": res["report"]["test"], "oracle_auc": res["report"].get("oracle_auc")}


def cmd_evaluate(args) -> dict:
    gen, _ = _configs(args)
    model = load_checkpoint(args.checkpoint)
    ds = _dataset(args, gen)
    prep = ex.prepare(ds)  # runs the split leakage guard
    rep = evaluate(model, prep.ctx, prep.splits.test, args.threshold)
    out = {"command": "evaluate", "checkpoint": str(args.checkpoint), "report": rep.to_dict()}
    if args.out:
        _write_json(args.out / "report.json", rep.to_dict())
    return out


def cmd_sweep(args) -> dict:
    gen, cfg = _configs(args)
    dataset = load_dataset(args.data) if args.data else None
    args.out.mkdir(parents=True, exist_ok=True)
    eff = ex.effective_config(gen, cfg)
    eff.update(k_list=args.k, seeds=args.seeds)
    _write_json(args.out / "config.json", eff)
    res = ex.sweep_k(gen, cfg, args.k, args.seeds, args.out, dataset)
    return {"command": "sweep-k", "out": str(args.out), "summary": res["summary"]}


def cmd_grad_check(args) -> dict:
    report = run_grad_check(seed=args.seed, K=args.k, h=args.h)
    bad = failing(report, args.tol)
    out = {"command": "grad-check", **summary(report), "tol": args.tol, "passed": not bad, "failing": bad}
    if args.out:
        _write_json(args.out / "grad_check.json", {**out, "params": report["params"]})
    if bad:
        raise GradCheckFailed(out)
    return out


class GradCheckFailed(Exception):
    def __init__(self, payload):
        super().__init__(f"{len(payload['failing'])} parameters exceed tolerance {payload['tol']}")
        self.payload = payload


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "evaluate": cmd_evaluate, "sweep-k": cmd_sweep,
            "grad-check": cmd_grad_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        result = COMMANDS[args.command](args)
    except GradCheckFailed as exc:
        print(json.dumps({"error": "GradCheckFailed", "message": str(exc), **exc.payload}, sort_keys=True))
        return 1
    except Exception as exc:  # every failure becomes an error object
        logging.getLogger(__name__).debug("command failed", exc_info=True)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}, sort_keys=True))
        return 1
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
