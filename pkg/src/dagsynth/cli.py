"""Command-line entry point: fit, sample, evaluate and DAG tooling."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .autodiff import NonFiniteError, NonFiniteGradientError, no_grad
from .checkpoint import Checkpoint, CheckpointError
from .dag import VARIANTS, Dag, DagError, derive_sets, load_dag, make_variant, save_dag, topo_order, transitive_reduction
from .data.encoding import STRATEGIES, decode_and_sample
from .data.table import SchemaError, check_schema, infer_meta, read_csv, read_overrides, write_csv
from .evaluation import METRICS, ml_efficacy, statistical_report
from .training import LOSSES, TrainConfig, Trainer, TrainingDiverged, write_history

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
OUTPUT_ENV = "DAGSYNTH_OUTPUT_DIR"
CHECKPOINT_NAME = "checkpoint.dsck"

log = logging.getLogger("dagsynth")


def git_blob_sha1(path: str | Path) -> str:
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def output_dir(arg: str | None) -> Path:
    out = Path(arg or os.environ.get(OUTPUT_ENV) or "dagsynth_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _clean(obj):
    """JSON-safe copy: NaN becomes null, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- commands


def cmd_fit(args) -> int:
    table = read_csv(args.data)
    overrides = read_overrides(args.overrides)
    seed = args.seed if args.seed is not None else int(np.random.SeedSequence().entropy % 2**31)
    out = output_dir(args.out)
    if args.resume:
        ckpt = Checkpoint.load(args.resume)
        check_schema(table, ckpt.metas, "data")
        trainer = ckpt.trainer(table)
        config = trainer.config
        dag = trainer.dag
    else:
        metas = infer_meta(table, overrides, seed=seed)
        columns = [m.name for m in metas]
        if args.dag:
            dag = load_dag(args.dag, columns)
        else:
            dag = make_variant(Dag(tuple(columns)), args.variant, columns, args.sink)
        config = TrainConfig(
            loss=args.loss,
            epochs=args.epochs,
            batch_size=args.batch_size,
            lr=args.lr,
            gp_lambda=args.gp_lambda,
            clip=args.clip,
            n_critic=args.n_critic,
            smoothing=args.smoothing,
            gamma=args.gamma,
            kl_weight=args.kl_weight,
            seed=seed,
        )
        trainer = Trainer(table, dag, metas, config)
    log.info("training %d epochs x %d steps", args.epochs, trainer.steps_per_epoch)
    trainer.train(epochs=args.epochs)
    Checkpoint.from_trainer(trainer).save(out / CHECKPOINT_NAME)
    write_history(trainer.state.history, out / "losses.csv")
    inputs = {"data": args.data, "overrides": args.overrides, "dag": args.dag, "resume": args.resume}
    manifest = {
        "version": __version__,
        "command": "fit",
        "seed": config.seed,
        "config": config.to_dict(),
        "dag": dag.to_json(),
        "inputs": {k: {"path": str(v), "sha1": git_blob_sha1(v)} for k, v in inputs.items() if v},
        "outputs": {"checkpoint": CHECKPOINT_NAME, "losses": "losses.csv"},
    }
    _write_json(manifest, out / "manifest.json")
    print(f"wrote {out / CHECKPOINT_NAME}")
    return EXIT_OK


def cmd_sample(args) -> int:
    if args.strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {args.strategy!r}; expected one of {STRATEGIES}")
    if args.rows < 0:
        raise ValueError("--rows must be >= 0")
    ckpt = Checkpoint.load(args.checkpoint)
    seed = args.seed if args.seed is not None else int(np.random.SeedSequence().entropy % 2**31)
    out = Path(args.out) if args.out else output_dir(None) / "synthetic.csv"
    if args.rows == 0:
        table = pd.DataFrame(columns=[m.name for m in ckpt.metas])
    else:
        rng = np.random.default_rng(seed)
        gen = ckpt.generator()
        with no_grad():
            encoded = gen.forward(args.rows, rng)
        table = decode_and_sample(encoded, ckpt.metas, args.strategy, rng)
    write_csv(table, out)
    print(f"wrote {len(table)} rows to {out} (seed {seed})")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    original = read_csv(args.original)
    if args.checkpoint:
        metas = Checkpoint.load(args.checkpoint).metas
    else:
        metas = infer_meta(original, read_overrides(args.overrides), with_mixtures=False)
    check_schema(original, metas, "original")
    synthetic = []
    for path in args.synthetic:
        table = read_csv(path)
        check_schema(table, metas, str(path))
        synthetic.append((str(path), table))
    orders = tuple(args.orders)
    blocks = []
    for path, table in synthetic:
        block = {"path": path, "statistics": statistical_report(original, table, metas, orders)}
        if not args.no_efficacy:
            block["efficacy"] = ml_efficacy(original, table, metas, seed=args.seed, mode=args.efficacy_mode)
        blocks.append(block)
    report = {"tables": blocks, "average": _average(blocks, orders, metas, not args.no_efficacy)}
    out = output_dir(args.out)
    _write_json(report, out / "report.json")
    _write_flat(report, out / "report.csv")
    print(f"wrote {out / 'report.json'}")
    return EXIT_OK


def _nanmean(values):
    values = [v for v in values if v is not None and math.isfinite(v)]
    return float(np.mean(values)) if values else float("nan")


def _average(blocks, orders, metas, efficacy: bool) -> dict:
    avg = {
        "statistics": {
            o: {metric: _nanmean([b["statistics"][o][metric] for b in blocks]) for metric in METRICS}
            for o in orders
        }
    }
    if efficacy:
        avg["efficacy"] = {
            m.name: {
                "kind": blocks[0]["efficacy"][m.name]["kind"],
                "score": _nanmean([b["efficacy"][m.name]["score"] for b in blocks]),
            }
            for m in metas
        }
    return avg


def _write_flat(report: dict, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["table", "section", "key", "metric", "value"])
        named = [(b["path"], b) for b in report["tables"]] + [("average", report["average"])]
        for name, block in named:
            for order, stats in block["statistics"].items():
                for metric in METRICS:
                    w.writerow([name, "statistics", f"order{order}", metric, stats[metric]])
            for column, score in block.get("efficacy", {}).items():
                w.writerow([name, "efficacy", column, score["kind"], score["score"]])


def cmd_dag(args) -> int:
    columns = list(read_csv(args.data).columns) if getattr(args, "data", None) else None
    dag = load_dag(args.path, columns)
    if args.action == "check":
        sets = derive_sets(dag)
        for node in topo_order(dag, columns):
            s = sets[node]
            print(f"{node}:")
            print(f"  ancestors: {sorted(s.ancestors)}")
            print(f"  direct ancestors: {sorted(s.direct_ancestors)}")
            print(f"  sources: {sorted(s.sources)}")
            print(f"  in-edges: {sorted(s.in_edges)}")
        return EXIT_OK
    if args.action == "reduce":
        result = transitive_reduction(dag)
    else:
        result = make_variant(dag, args.kind, columns or list(dag.nodes), args.sink)
    if args.out:
        save_dag(result, args.out)
        print(f"wrote {args.out} ({len(result.edges)} edges)")
    else:
        print(json.dumps(result.to_json(), indent=2))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dagsynth", description="DAG-structured GAN for synthetic tabular data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="train a generator on a CSV table")
    fit.add_argument("--data", required=True)
    fit.add_argument("--overrides", help='JSON {"categorical": [...]}')
    graph = fit.add_mutually_exclusive_group()
    graph.add_argument("--dag", help="DAG file (JSON or DOT)")
    graph.add_argument("--variant", choices=[v for v in VARIANTS if v not in ("full", "trans_red")], default="no_links")
    fit.add_argument("--sink", help="sink column for --variant prediction")
    fit.add_argument("--resume", help="continue from a checkpoint")
    fit.add_argument("--loss", choices=LOSSES, default="WGAN")
    fit.add_argument("--epochs", type=int, default=100)
    fit.add_argument("--batch-size", type=int, default=500)
    fit.add_argument("--lr", type=float)
    fit.add_argument("--gp-lambda", type=float, default=10.0)
    fit.add_argument("--clip", type=float, default=0.01)
    fit.add_argument("--n-critic", type=int, help="critic updates per generator update (default: 1 for SGAN, 5 otherwise)")
    fit.add_argument("--smoothing", choices=("NO", "OS", "TS"), default="TS")
    fit.add_argument("--gamma", type=float, default=0.2)
    fit.add_argument("--kl-weight", type=float, help="default: 0.01 for WGAN, 1.0 otherwise")
    fit.add_argument("--seed", type=int)
    fit.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./dagsynth_out)")
    fit.set_defaults(func=cmd_fit)

    sample = sub.add_parser("sample", help="draw synthetic rows from a checkpoint")
    sample.add_argument("--checkpoint", required=True)
    sample.add_argument("--rows", type=int, required=True)
    sample.add_argument("--strategy", default="SS", help="AA, SA, AS or SS")
    sample.add_argument("--seed", type=int)
    sample.add_argument("--out", help="output CSV path")
    sample.set_defaults(func=cmd_sample)

    ev = sub.add_parser("evaluate", help="compare synthetic tables with the original")
    ev.add_argument("--original", required=True)
    ev.add_argument("--synthetic", required=True, nargs="+")
    meta = ev.add_mutually_exclusive_group()
    meta.add_argument("--checkpoint", help="take column metadata from a checkpoint")
    meta.add_argument("--overrides")
    ev.add_argument("--orders", type=int, nargs="+", default=[1, 2, 3], choices=[1, 2, 3])
    ev.add_argument("--no-efficacy", action="store_true")
    ev.add_argument("--efficacy-mode", choices=("prose", "literal"), default="prose")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_evaluate)

    dag = sub.add_parser("dag", help="inspect and transform DAG files")
    dsub = dag.add_subparsers(dest="action", required=True)
    check = dsub.add_parser("check", help="validate and print derived sets")
    reduce_ = dsub.add_parser("reduce", help="transitive reduction")
    variant = dsub.add_parser("variant", help="derived graph variant")
    variant.add_argument("--kind", required=True, choices=VARIANTS)
    variant.add_argument("--sink")
    for p in (check, reduce_, variant):
        p.add_argument("path")
        p.add_argument("--data", help="CSV whose columns the DAG must cover")
    for p in (reduce_, variant):
        p.add_argument("--out")
    dag.set_defaults(func=cmd_dag)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (TrainingDiverged, NonFiniteError, NonFiniteGradientError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (DagError, SchemaError, CheckpointError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
