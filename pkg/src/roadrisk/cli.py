"""Command-line front end: ``roadrisk {synth,build,train,eval,features}``.

Exit codes: 0 success, 2 input error, 3 numeric/training failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

from .container import stored_crc
from .errors import InputError, NumericError, ShapeMismatch
from .harness import METRIC_NAMES, TASKS, Metrics, TrainConfig, evaluate_model, multi_seed_report
from .ingest import DEFAULT_RATIOS, accidents_to_csv, build_dataset, load_accidents, load_dataset, save_dataset
from .roadgraph import load_graph, save_graph
from .synth import SynthSpec, generate
from .travel import MODEL_KINDS, load_checkpoint, save_checkpoint

EXIT_INPUT = 2
EXIT_NUMERIC = 3

_DEFAULT_SYNTH = SynthSpec()
_DEFAULT_TRAIN = TrainConfig()


def _floats(text: str, n: int, what: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"{what} must be {n} comma-separated numbers, got {text!r}")
    if len(vals) != n:
        raise argparse.ArgumentTypeError(f"{what} must be {n} comma-separated numbers, got {text!r}")
    return vals


def _ratios(text: str) -> tuple[float, ...]:
    return _floats(text, 3, "--ratios")


def _risk(text: str) -> tuple[float, ...]:
    return _floats(text, 4, "--risk-weights")


def _seeds(text: str) -> list[int]:
    try:
        seeds = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--seeds must be comma-separated integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("--seeds needs at least one seed")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="roadrisk", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic road network as node/edge/accident CSVs",
                       formatter_class=fmt)
    p.add_argument("--out-dir", required=True, type=Path, help="directory for the three CSVs")
    p.add_argument("--grid-w", type=int, default=_DEFAULT_SYNTH.grid_w, help="intersections per row")
    p.add_argument("--grid-h", type=int, default=_DEFAULT_SYNTH.grid_h, help="intersections per column")
    p.add_argument("--jitter", type=float, default=_DEFAULT_SYNTH.jitter,
                   help="coordinate noise as a fraction of the block size")
    p.add_argument("--diag-prob", type=float, default=_DEFAULT_SYNTH.diag_prob,
                   help="chance of a diagonal shortcut per block")
    p.add_argument("--risk-weights", type=_risk, default=_DEFAULT_SYNTH.risk_weights,
                   help="bias,sharp,deg,hwy")
    p.add_argument("--seed", type=int, default=_DEFAULT_SYNTH.seed, help="generator seed")

    p = sub.add_parser("build", help="encode, label and split CSVs into a dataset file", formatter_class=fmt)
    p.add_argument("node_csv", type=Path)
    p.add_argument("edge_csv", type=Path)
    p.add_argument("accident_csv", type=Path)
    p.add_argument("--out", required=True, type=Path, help="dataset file to write")
    p.add_argument("--seed", type=int, default=0, help="split seed")
    p.add_argument("--ratios", type=_ratios, default=DEFAULT_RATIOS, help="train,val,test")
    p.add_argument("--neighborhood", choices=("all", "in"), default="all",
                   help="roads at v considered for the angle set of edge (u, v)")

    p = sub.add_parser("train", help="train one model per seed and report mean±std test metrics",
                       formatter_class=fmt)
    p.add_argument("dataset", type=Path)
    p.add_argument("--model", choices=MODEL_KINDS, default=_DEFAULT_TRAIN.model, help="architecture")
    p.add_argument("--task", choices=TASKS, default=_DEFAULT_TRAIN.task, help="label set")
    seeds = p.add_mutually_exclusive_group()
    seeds.add_argument("--seeds", type=_seeds, default=[1, 2, 3], help="comma-separated training seeds")
    seeds.add_argument("--seed", type=int, help="train a single seed instead of --seeds")
    p.add_argument("--epochs", type=int, default=_DEFAULT_TRAIN.epochs, help="full-batch epochs")
    p.add_argument("--lr", type=float, default=_DEFAULT_TRAIN.lr, help="Adam learning rate")
    p.add_argument("--weight-decay", type=float, default=_DEFAULT_TRAIN.weight_decay, help="L2 coefficient")
    p.add_argument("--dropout", type=float, default=_DEFAULT_TRAIN.dropout, help="drop probability")
    p.add_argument("--hidden", type=int, default=_DEFAULT_TRAIN.hidden,
                   help="width of each TRAVEL component (layer output is twice this)")
    p.add_argument("--class-weighted", action="store_true", help="inverse-frequency loss weights")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers across seeds")
    p.add_argument("--format", choices=("json", "table"), default="table", help="output style")
    p.add_argument("--report", type=Path, help="also write the JSON report here")
    p.add_argument("--checkpoint-dir", type=Path, help="write the selected parameters of each seed here")

    p = sub.add_parser("eval", help="test-mask metrics of a checkpoint", formatter_class=fmt)
    p.add_argument("dataset", type=Path)
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--format", choices=("json", "table"), default="table", help="output style")

    p = sub.add_parser("features", help="print e_uv, a_uv and d_uv of one edge", formatter_class=fmt)
    p.add_argument("dataset", type=Path)
    p.add_argument("--edge", type=int, required=True, help="edge index")
    p.add_argument("--format", choices=("json", "table"), default="table", help="output style")
    return parser


def cmd_synth(args) -> int:
    spec = replace(_DEFAULT_SYNTH, grid_w=args.grid_w, grid_h=args.grid_h, jitter=args.jitter,
                   diag_prob=args.diag_prob, risk_weights=tuple(args.risk_weights), seed=args.seed)
    res = generate(spec)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    save_graph(res.graph, args.out_dir / "nodes.csv", args.out_dir / "edges.csv")
    (args.out_dir / "accidents.csv").write_text(accidents_to_csv(res.accidents), encoding="utf-8")
    print(f"nodes={res.graph.num_nodes} edges={res.graph.num_edges} accidents={len(res.accidents)} "
          f"out={args.out_dir}")
    return 0


def cmd_build(args) -> int:
    g = load_graph(args.node_csv, args.edge_csv)
    accidents = load_accidents(args.accident_csv)
    ds = build_dataset(g, accidents, seed=args.seed, ratios=args.ratios, neighborhood=args.neighborhood)
    data = save_dataset(ds, args.out)
    pos = float(ds.labels_occurrence.mean()) if ds.num_nodes else 0.0
    deg = ds.num_edges / ds.num_nodes if ds.num_nodes else 0.0
    print(f"nodes={ds.num_nodes} edges={ds.num_edges} d_v={ds.node_features.shape[1]} "
          f"d_e={ds.edge_features.shape[1]} avg_degree={deg:.2f} pos={100 * pos:.2f}% "
          f"train={int(ds.train_mask.sum())} val={int(ds.val_mask.sum())} test={int(ds.test_mask.sum())} "
          f"crc32={stored_crc(data):08x}")
    return 0


def cmd_train(args) -> int:
    ds = load_dataset(args.dataset)
    seeds = [args.seed] if args.seed is not None else args.seeds
    try:
        config = TrainConfig(epochs=args.epochs, lr=args.lr, weight_decay=args.weight_decay,
                             dropout=args.dropout, hidden=args.hidden, seed=seeds[0], task=args.task,
                             model=args.model, class_weighted=args.class_weighted)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    report = multi_seed_report(ds, config, seeds, jobs=args.jobs, keep_models=args.checkpoint_dir is not None)
    if args.checkpoint_dir is not None:
        args.checkpoint_dir.mkdir(parents=True, exist_ok=True)
        for run in report.runs:
            path = args.checkpoint_dir / f"{config.model}_{config.task}_seed{run.seed}.tapw"
            save_checkpoint(run.result.model, path,
                            {"task": config.task, "seed": run.seed, "best_epoch": run.best_epoch,
                             "test": run.test, "dataset_crc32": ds.checksum()})
            run.result = None
    text = report.dumps(args.format)
    if args.report is not None:
        args.report.write_text(report.dumps("json") + "\n", encoding="utf-8")
    print(text)
    return 0


def _metrics_text(m: dict, fmt: str, header: str) -> str:
    if fmt == "json":
        return json.dumps(m, indent=2, sort_keys=True)
    lines = [header]
    for k in METRIC_NAMES:
        v = m[k]
        lines.append(f"{k:<12} {'n/a' if math.isnan(v) else f'{100 * v:.1f}'}")
    return "\n".join(lines)


def cmd_eval(args) -> int:
    ds = load_dataset(args.dataset)
    model, header = load_checkpoint(args.checkpoint)
    h = header["hyper"]
    if h["in_dim"] != ds.node_features.shape[1] or h["edge_dim"] != ds.edge_features.shape[1]:
        raise InputError(f"checkpoint expects d_v={h['in_dim']} d_e={h['edge_dim']}, dataset has "
                         f"d_v={ds.node_features.shape[1]} d_e={ds.edge_features.shape[1]}")
    task = header.get("extra", {}).get("task", "occurrence" if h["num_classes"] == 2 else "severity")
    metrics: Metrics = evaluate_model(model, ds, task)
    print(_metrics_text(metrics.as_dict(), args.format, f"model={header['model']} task={task} split=test"))
    return 0


def cmd_features(args) -> int:
    ds = load_dataset(args.dataset)
    k = args.edge
    if not 0 <= k < ds.num_edges:
        raise InputError(f"edge {k} outside [0, {ds.num_edges})")
    names = ds.feature_names["edge"]
    out = {
        "edge": k,
        "source": int(ds.edge_index[k, 0]),
        "target": int(ds.edge_index[k, 1]),
        "e_uv": {n: float(v) for n, v in zip(names, ds.edge_features[k])},
        "a_uv": {"min_angle": float(ds.edge_ang[k, 0]), "max_angle": float(ds.edge_ang[k, 1]),
                 "straightness": float(ds.edge_ang[k, 2])},
        "d_uv": {"dlat": float(ds.edge_dir[k, 0]), "dlon": float(ds.edge_dir[k, 1])},
    }
    if args.format == "json":
        print(json.dumps(out, indent=2, sort_keys=True))
        return 0
    print(f"edge {k}: node {out['source']} -> node {out['target']}")
    print("a_uv " + " ".join(f"{n}={v!r}" for n, v in out["a_uv"].items()))
    print("d_uv " + " ".join(f"{n}={v!r}" for n, v in out["d_uv"].items()))
    print("e_uv")
    for n, v in out["e_uv"].items():
        print(f"  {n:<28} {v!r}")
    return 0


_COMMANDS = {"synth": cmd_synth, "build": cmd_build, "train": cmd_train, "eval": cmd_eval,
             "features": cmd_features}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"roadrisk {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, ShapeMismatch) as exc:
        print(f"roadrisk {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"roadrisk {args.command}: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
