"""Command line entry point: ``gnnseed {cluster,classify,synth,embed,run}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .experiment import ExperimentConfig, load_dataset, load_fixture, run_experiment
from .gcn import TrainConfig
from .graph import write_edge_list, write_labels
from .pipelines import cluster
from .synth import sample_dcsbm, sample_sbm

log = logging.getLogger("gnnseed")

# flag name -> TrainConfig field
TRAIN_FLAGS = {
    "lr": "learning_rate",
    "max_epochs": "max_epochs",
    "patience": "patience",
    "loss_tolerance": "loss_tolerance",
    "dropout": "dropout",
    "weight_decay": "weight_decay",
}


def parse_grid(text: str) -> list[float]:
    """``"0:0.3:0.02"`` -> inclusive grid; ``"0.1,0.2"`` -> explicit list."""
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        if step <= 0:
            raise argparse.ArgumentTypeError("grid step must be positive")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(count)]
    return [float(x) for x in text.split(",") if x]


def parse_theta(text: str):
    if text.lower() in ("none", "1", "off"):
        return None
    kind, _, params = text.partition(":")
    if kind.lower() != "beta":
        raise argparse.ArgumentTypeError("theta must look like beta:a,b or none")
    a, b = (float(x) for x in params.split(","))
    return (a, b)


def parse_sizes(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", ":").split(":"))


def parse_list(text: str) -> list[str]:
    return [x.strip().upper() for x in text.split(",") if x.strip()]


def _add_train_flags(p):
    g = p.add_argument_group("training")
    g.add_argument("--lr", type=float)
    g.add_argument("--max-epochs", type=int)
    g.add_argument("--patience", type=int)
    g.add_argument("--loss-tolerance", type=float)
    g.add_argument("--dropout", type=float)
    g.add_argument("--weight-decay", type=float)
    inp = g.add_mutually_exclusive_group()
    inp.add_argument("--fixed-input", action="store_true", default=None, help="keep Z0 fixed (classification default)")
    inp.add_argument("--learn-input", action="store_true", default=None, help="learn Z0 (clustering default)")


def _add_run_flags(p, methods_default: str):
    p.add_argument("--config", help="YAML or JSON file; explicit flags override it")
    p.add_argument("--methods", type=parse_list, help=f"comma list (default {methods_default})")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, dest="base_seed")
    p.add_argument("--out", dest="output")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--workers", type=int, help="worker processes (default: $GNNSEED_THREADS or CPU count)")
    p.add_argument("--trace-dir", help="write per-epoch loss traces here")
    p.add_argument("--gee-max-iter", type=int)
    _add_train_flags(p)


def _add_source_flags(p):
    p.add_argument("--edges")
    p.add_argument("--labels")
    p.add_argument("--fixture", help="bundled dataset name, e.g. karate")
    p.add_argument("--name", help="dataset name used in the report")


def _add_synth_flags(p):
    p.add_argument("--model", choices=["sbm", "dcsbm"])
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--intra", type=float)
    p.add_argument("--r-grid", type=parse_grid)
    p.add_argument("--theta", type=parse_theta)
    p.add_argument("--sizes", type=parse_sizes)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser = argparse.ArgumentParser(prog="gnnseed", description="GEE-seeded GNN clustering and classification")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", parents=[common], help="clustering experiment on a dataset")
    _add_source_flags(p)
    _add_run_flags(p, "gee,gnn,gg")

    p = sub.add_parser("classify", parents=[common], help="classification experiment on a dataset")
    _add_source_flags(p)
    p.add_argument("--ratios", type=lambda s: [int(x) for x in s.split(",")])
    _add_run_flags(p, "gee,gnn,gg,gg-c")

    p = sub.add_parser("synth", parents=[common], help="experiment (or graph export) on SBM / DC-SBM graphs")
    _add_synth_flags(p)
    p.add_argument("--task", choices=["cluster", "classify"])
    p.add_argument("--ratios", type=lambda s: [int(x) for x in s.split(",")])
    p.add_argument("--export", metavar="DIR", help="only sample the graphs and write edge/label files")
    _add_run_flags(p, "gee,gnn,gg")

    p = sub.add_parser("embed", parents=[common], help="write the embedding of one clustering run as CSV")
    _add_source_flags(p)
    p.add_argument("--method", default="gee", type=str.upper, choices=["GEE", "GNN", "GG"])
    p.add_argument("--k", type=int, help="number of clusters (default: number of labels)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--initial", action="store_true", help="write Z0 instead of the final embedding")
    p.add_argument("--out", required=True)
    _add_train_flags(p)

    p = sub.add_parser("run", parents=[common], help="run an experiment config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", dest="output")
    p.add_argument("--workers", type=int)
    return parser


def _train_overrides(args) -> dict:
    out = {}
    for flag, key in TRAIN_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            out[key] = v
    if getattr(args, "fixed_input", None):
        out["train_input"] = False
    if getattr(args, "learn_input", None):
        out["train_input"] = True
    return out


def config_from_args(args) -> ExperimentConfig:
    base: dict = {}
    if getattr(args, "config", None):
        base = ExperimentConfig.from_file(args.config).to_dict()
    cmd = args.command
    if cmd in ("cluster", "classify"):
        base["task"] = cmd
    elif cmd == "synth":
        base.setdefault("task", "cluster")
        if args.task:
            base["task"] = args.task
    for key in ("methods", "trials", "base_seed", "output", "format", "workers", "trace_dir", "gee_max_iter", "ratios"):
        v = getattr(args, key, None)
        if v is not None:
            base[key] = v
    if "methods" not in base:
        base["methods"] = ["GEE", "GNN", "GG", "GG-C"] if base["task"] == "classify" else ["GEE", "GNN", "GG"]
    train = dict(base.get("train") or {})
    train.update(_train_overrides(args))
    base["train"] = train

    if cmd in ("cluster", "classify"):
        if args.fixture:
            base.update(dataset=args.fixture, edges=None, labels=None, synth=None)
        elif args.edges or args.labels:
            base.update(edges=args.edges, labels=args.labels, dataset=args.name, synth=None)
    elif cmd == "synth":
        synth = dict(base.get("synth") or {})
        for key in ("model", "n", "k", "intra", "r_grid", "sizes"):
            v = getattr(args, key, None)
            if v is not None:
                synth[key] = v
        if args.theta is not None or (args.model == "sbm" and "theta" not in synth):
            synth["theta"] = args.theta
        if synth.get("model") == "sbm":
            synth["theta"] = None
        base.update(synth=synth, dataset=None, edges=None, labels=None)
    return ExperimentConfig.from_dict(base)


def _progress(done, total, elapsed):
    log.info("%d/%d cells done (%.1fs)", done, total, elapsed)


def _export(cfg: ExperimentConfig, out_dir: str) -> int:
    from .experiment import derive_seed

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    syn = cfg.synth
    for r in syn.r_grid:
        for trial in range(cfg.trials):
            rng = np.random.default_rng(derive_seed(cfg.base_seed, cfg.dataset_name, "graph", (r, None), trial))
            block = syn.block_config(r)
            g, y = sample_sbm(block, rng) if syn.model == "sbm" else sample_dcsbm(block, rng)[:2]
            stem = out / f"{syn.model}_r{r:g}_t{trial}"
            write_edge_list(g, f"{stem}.edges")
            write_labels(y, f"{stem}.labels")
            log.info("wrote %s.edges (n=%d, m=%d)", stem, g.n, g.m)
    return 0


def _embed(args) -> int:
    ds = load_fixture(args.fixture) if args.fixture else load_dataset(args.edges, args.labels, args.name)
    k = args.k or ds.k
    cfg = TrainConfig.clustering().updated(**_train_overrides(args))
    res = cluster(args.method, ds.graph, k, cfg, args.seed, truth=ds.labels)
    emb = res.init_embedding if args.initial else res.embedding
    header = ",".join(["node", "label", "prediction"] + [f"z{j}" for j in range(emb.shape[1])])
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for i in range(emb.shape[0]):
            vals = ",".join(repr(float(v)) for v in emb[i])
            fh.write(f"{ds.node_ids[i]},{ds.label_values[ds.labels[i]]},{res.predictions[i]},{vals}\n")
    log.info("%s ARI %.4f; wrote %s", args.method, res.metric, args.out)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "embed":
            return _embed(args)
        cfg = config_from_args(args)
        if args.command == "synth" and args.export:
            return _export(cfg, args.export)
        report = run_experiment(cfg, progress=_progress if args.verbose else None)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"gnnseed: error: {exc}", file=sys.stderr)
        return 2
    if not cfg.output:
        sys.stdout.write(report.to_csv() if cfg.format == "csv" else report.to_json())
    for row in report.failed:
        print(f"gnnseed: failed {row['method']} r={row['r']} ratio={row['ratio']} "
              f"trial={row['trial']}: {row['error']}", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
