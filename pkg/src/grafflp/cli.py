"""Command-line entry point: ``grafflp <subcommand>``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical divergence.
``GRAFFLP_NUM_THREADS`` caps the BLAS thread pool.
"""

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import models as M
from .graph import adjusted_homophily, edge_homophily, load_bundle, save_bundle, DegenerateMetricError
from .metrics import write_gs_csv
from .nn import load_checkpoint, save_checkpoint
from .splits import (
    SplitConfig,
    generate_chain_graph,
    generate_grid_graph,
    load_manifest,
    save_manifest,
    transductive_split,
)
from .training import (
    ConfigError,
    NumericalDivergenceError,
    TrainConfig,
    evaluate,
    grid_expand,
    measure_inference,
    read_config,
    report_scaling,
    role_adjacency,
    train,
    _parse_value,
)

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 2, 3
THREADS_ENV = "GRAFFLP_NUM_THREADS"

log = logging.getLogger("grafflp")


def _json_default(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2, default=_json_default)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _load_config(args):
    cfg = read_config(args.config) if args.config else TrainConfig()
    overrides = {}
    types = {k: type(v) for k, v in cfg.to_dict().items()}
    for item in args.set or []:
        key, _, raw = item.partition("=")
        if key not in types:
            raise ConfigError(f"unknown key {key!r} in --set")
        overrides[key] = _parse_value(types[key], raw, key)
    return cfg.replace(**overrides) if overrides else cfg


def _save_model(path, model, cfg):
    meta = {
        "model_config": model.cfg.to_dict(),
        "train_config": cfg.to_dict() if cfg else None,
        "in_dim": model.in_dim,
    }
    save_checkpoint(path, model.state_tensors(), meta)


def _load_model(path):
    tensors, meta = load_checkpoint(path)
    mcfg = M.GraffConfig(**meta["model_config"])
    model = M.LinkModel.from_state_tensors(mcfg, tensors)
    return model, meta


# --- subcommands -------------------------------------------------------------------


def cmd_synth(args):
    if args.kind == "grid":
        g = generate_grid_graph(args.rows, args.cols, args.mine_rate, args.seed)
    else:
        g = generate_chain_graph(args.nodes, args.shortcut_rate, args.num_classes, args.seed)
    save_bundle(g, args.out)
    try:
        adj = adjusted_homophily(g)
    except DegenerateMetricError:
        adj = None
    _dump({
        "bundle": str(args.out),
        "num_nodes": g.num_nodes,
        "num_edges": g.num_edges,
        "edge_homophily": edge_homophily(g),
        "adjusted_homophily": adj,
    })


def cmd_split(args):
    g = load_bundle(args.bundle)
    cfg = SplitConfig(
        ratios=tuple(args.ratios),
        disjoint_train_fraction=args.disjoint_train_fraction,
        negative_pool_ratio={"train": args.train_negatives, "val": 1.0, "test": 1.0},
        seed=args.seed,
    )
    split = transductive_split(g, cfg)
    save_manifest(split, args.out)
    _dump(split.directed_counts())


def cmd_train(args):
    g = load_bundle(args.bundle)
    split = load_manifest(args.manifest)
    cfg = _load_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model, report = train(g, split, cfg, log_every=args.log_every)
    _save_model(out / "checkpoint.json", model, cfg)
    _dump(report.to_dict(), out / "report.json")
    print(f"test_auroc={report.test_auroc:.4f} best_val_auroc={report.best_val_auroc:.4f} "
          f"best_epoch={report.best_epoch} params={report.param_count}")


def _eval_bundle(args):
    model, meta = _load_model(args.checkpoint)
    g = load_bundle(args.bundle)
    split = load_manifest(args.manifest)
    return model, g, split, evaluate(model, g, split, args.role)


def cmd_eval(args):
    _, _, _, res = _eval_bundle(args)
    _dump({
        "role": args.role,
        "auroc": res["auroc"],
        "class_mix": {f"{u},{v}": x for (u, v), x in res["class_mix"].items()},
        "gs_T": res["gs"].gs[-1],
        "gs_0": res["gs"].gs[0],
        "gs_graph": res["gs"].graph,
    }, args.out)


def cmd_gs_trace(args):
    _, _, _, res = _eval_bundle(args)
    write_gs_csv(res["gs"], args.out)
    print(f"wrote {len(res['gs'])} layers to {args.out} (degrees from {args.role} graph)")


def cmd_grid(args):
    g = load_bundle(args.bundle)
    split = load_manifest(args.manifest)
    base = read_config(args.config) if args.config else TrainConfig()
    space = json.loads(Path(args.space).read_text())
    configs = grid_expand(space, budget=args.budget, seed=args.seed, base=base)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for k, cfg in enumerate(configs):
        try:
            _, report = train(g, split, cfg)
        except NumericalDivergenceError as exc:
            log.warning("config %d diverged: %s", k, exc)
            summary.append({"index": k, "diverged": True, "config": cfg.to_dict()})
            continue
        _dump(report.to_dict(), out / f"run_{k:05d}.json")
        summary.append({
            "index": k,
            "best_val_auroc": report.best_val_auroc,
            "test_auroc": report.test_auroc,
            "config": cfg.to_dict(),
        })
    _dump(summary, out / "summary.json")
    print(f"{len(configs)} configurations, reports in {out}")


def cmd_bench(args):
    g = load_bundle(args.bundle)
    split = load_manifest(args.manifest)
    cfg = _load_config(args)
    mcfg = cfg.model_config()
    rows = report_scaling(mcfg, g.features.shape[1], layers=args.layers, hidden=args.hidden)
    for row in rows:
        c = M.GraffConfig(**{**mcfg.to_dict(), "num_layers": row["num_layers"],
                             "hidden_dim": row["hidden_dim"]})
        model = M.init_model(c, g.features.shape[1], seed=cfg.seed)
        row.update({f"inference_{k}": v for k, v in
                    measure_inference(model, g, split, args.repeats).items()})
    header = ["model", "num_layers", "hidden_dim", "params", "mp_params",
              "inference_mean", "inference_sd"]
    print("\t".join(header))
    for row in rows:
        print("\t".join(
            f"{row[h]:.6f}" if isinstance(row[h], float) and not math.isnan(row[h]) else str(row[h])
            for h in header
        ))
    if args.out:
        _dump(rows, args.out)


# --- parser ---------------------------------------------------------------------------


def _add_config_args(p):
    p.add_argument("--config", help="key = value training config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")


def _add_eval_args(p):
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--role", default="test", choices=("train", "val", "test"))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="grafflp", description="Link prediction with gradient-flow graph networks."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic graph bundle")
    p.add_argument("kind", choices=("grid", "chain"))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rows", type=int, default=100)
    p.add_argument("--cols", type=int, default=100)
    p.add_argument("--mine-rate", type=float, default=0.2)
    p.add_argument("--nodes", type=int, default=1000)
    p.add_argument("--shortcut-rate", type=float, default=0.05)
    p.add_argument("--num-classes", type=int, default=18)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="bundle -> split manifest")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratios", type=float, nargs=3, default=(0.8, 0.1, 0.1))
    p.add_argument("--disjoint-train-fraction", type=float, default=0.2)
    p.add_argument("--train-negatives", type=float, default=1.0,
                   help="stored train negatives per train positive")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="bundle + manifest + config -> checkpoint + report")
    p.add_argument("--bundle", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--log-every", type=int, default=0)
    _add_config_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="checkpoint -> metrics")
    _add_eval_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gs-trace", help="checkpoint -> gradient separability CSV")
    _add_eval_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gs_trace)

    p = sub.add_parser("grid", help="hyperparameter space file -> reports directory")
    p.add_argument("--space", required=True, help="JSON object: key -> list of values")
    p.add_argument("--bundle", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--budget", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="base config for keys not in the space")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("bench", help="parameter-count and inference-time table")
    p.add_argument("--bundle", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--layers", type=int, nargs="+", default=[1, 3, 5, 7, 9, 12])
    p.add_argument("--hidden", type=int, nargs="+")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--out")
    _add_config_args(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    threads = os.environ.get(THREADS_ENV)
    try:
        with threadpool_limits(limits=int(threads) if threads else None):
            args.func(args)
    except NumericalDivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
