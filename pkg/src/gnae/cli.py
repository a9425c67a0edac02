"""Command-line interface: ``gnae <subcommand> [flags]``.

Exit codes are 0 on success, 1 on usage errors and 2 on data or validation
errors.  Every random draw derives from one resolved seed.
"""
import argparse
import os
import sys

import numpy as np
import yaml

from ._random import derive_rng
from .data import (
    Checkpoint,
    export_embeddings,
    history_line,
    HISTORY_FIELDS,
    load_checkpoint,
    load_dataset,
    read_embeddings,
    save_checkpoint,
)
from .evaluation import cross_validate, holdout_evaluate
from .exceptions import CheckpointError, InvalidInputError, ParseError
from .graphon import AttributedGraph, induce_graphon, read_graph_text, write_graph_text
from .model import decode_weights, prior_sample
from .ot import SolverConfig, fgw_distance
from .training import TrainConfig, embed_graphs, format_epoch, sample_decoded_graph, train

DEFAULT_SEED = 42


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        values = yaml.safe_load(fh)
    if values is None:
        return {}
    if not isinstance(values, dict):
        raise InvalidInputError(f"{path}: config must be a mapping of TrainConfig fields")
    return values


def _cmd_train(args):
    values = _read_config(args.config)
    if args.seed is not None:
        values["seed"] = args.seed
    values.setdefault("seed", DEFAULT_SEED)
    cfg = TrainConfig.from_dict(values)
    dataset = load_dataset(args.dataset, cfg.seed)

    hist_fh = None
    if args.history:
        hist_fh = open(args.history, "w")
        hist_fh.write(",".join(HISTORY_FIELDS) + "\n")

    def on_epoch(row):
        print(format_epoch(row), flush=True)
        if hist_fh is not None:
            hist_fh.write(history_line(row) + "\n")
            hist_fh.flush()

    try:
        model, history = train(dataset, cfg, on_epoch=on_epoch)
    finally:
        if hist_fh is not None:
            hist_fh.close()
    save_checkpoint(args.out, Checkpoint(cfg, model, history))
    return 0


def _cmd_embed(args):
    ckpt = load_checkpoint(args.model)
    seed = ckpt.config.seed if args.seed is None else args.seed
    dataset = load_dataset(args.dataset, seed)
    codes = embed_graphs(ckpt.model, dataset.graphs)
    rows = [(i, z, g.label) for i, (z, g) in enumerate(zip(codes, dataset.graphs))]
    export_embeddings(args.out, rows)
    return 0


def _parse_sizes(text):
    try:
        sizes = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--nodes expects comma-separated integers, got {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise UsageError("--nodes needs positive sizes")
    return sizes


def _cmd_generate(args):
    sizes = _parse_sizes(args.nodes)
    if args.num < 1:
        raise UsageError("--num must be at least 1")
    ckpt = load_checkpoint(args.model)
    seed = ckpt.config.seed if args.seed is None else args.seed
    model = ckpt.model
    os.makedirs(args.out_dir, exist_ok=True)
    for s, size in enumerate(sizes):
        for i in range(args.num):
            rng = derive_rng(seed, "generate", s, i)
            _, z, _ = prior_sample(model.prior, rng)
            g = sample_decoded_graph(model.decoder, decode_weights(z), size, ckpt.config.signal_sigma, rng)
            write_graph_text(os.path.join(args.out_dir, f"graph_n{size}_{i:04d}.txt"),
                             AttributedGraph(g.num_nodes, g.edges))
    return 0


def _cmd_distance(args):
    a = induce_graphon(read_graph_text(args.graph_a))
    b = induce_graphon(read_graph_text(args.graph_b))
    if (a[1] is None) != (b[1] is None):
        raise InvalidInputError("both graphs need attributes, or neither")
    res = fgw_distance(a, b, SolverConfig(order=args.order))
    print(f"fgw {res.distance:.12g}")
    if args.plan_out:
        np.savetxt(args.plan_out, res.plan.matrix, fmt="%.12g", delimiter=",")
    return 0


def _cmd_eval(args):
    seed = DEFAULT_SEED if args.seed is None else args.seed
    _, labels, codes = read_embeddings(args.embeddings)
    if args.train_embeddings:
        _, tr_labels, tr_codes = read_embeddings(args.train_embeddings)
        report = holdout_evaluate(tr_codes, tr_labels, codes, labels, args.knn,
                                  protocol=f"{args.train_embeddings}→{args.embeddings}")
    else:
        if args.folds < 2:
            raise UsageError("--folds must be at least 2")
        report = cross_validate(codes, labels, args.folds, args.knn, seed)
    print(report.format())
    if args.report_out:
        with open(args.report_out, "w") as fh:
            fh.write("protocol,fold,accuracy\n")
            for f, acc in enumerate(report.fold_accuracies):
                fh.write(f"{report.protocol},{f},{acc:.9g}\n")
    return 0


def _cmd_inspect(args):
    ckpt = load_checkpoint(args.model)
    m = ckpt.model
    parts = [f.partitions for f in m.decoder.factors]
    print(f"factors {len(parts)} partitions {' '.join(map(str, parts))}")
    print(f"merged partitions {m.decoder.merged_partitions}")
    print(f"signal activation {m.decoder.signal_activation}")
    for t, mu in enumerate(m.prior.means):
        print(f"prior mean {t} " + " ".join(f"{v:.6g}" for v in mu))
    for key, value in ckpt.config.to_dict().items():
        print(f"config {key} {value}")
    return 0


def build_parser():
    p = _Parser(prog="gnae", description="Graphon autoencoder toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a model and write a checkpoint")
    t.add_argument("--dataset", required=True, help="TUDataset directory or synthetic:NAME")
    t.add_argument("--config", help="YAML/JSON file with TrainConfig fields")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--seed", type=int, help="master seed (overrides the config, default 42)")
    t.add_argument("--history", help="per-epoch CSV of loss, recon and reg")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("embed", help="write latent codes of a dataset as CSV")
    e.add_argument("--model", required=True, help="checkpoint path")
    e.add_argument("--dataset", required=True, help="TUDataset directory or synthetic:NAME")
    e.add_argument("--out", required=True, help="embeddings CSV path")
    e.add_argument("--seed", type=int, help="seed for synthetic datasets (default: the checkpoint's)")
    e.set_defaults(func=_cmd_embed)

    g = sub.add_parser("generate", help="sample graphs from prior codes")
    g.add_argument("--model", required=True, help="checkpoint path")
    g.add_argument("--num", type=int, required=True, help="graphs per size")
    g.add_argument("--nodes", required=True, help="comma-separated node counts, e.g. 20,40")
    g.add_argument("--out-dir", required=True, help="directory for edge-list files")
    g.add_argument("--seed", type=int, help="sampling seed (default: the checkpoint's)")
    g.set_defaults(func=_cmd_generate)

    d = sub.add_parser("distance", help="FGW distance between two graph files")
    d.add_argument("--graph-a", required=True, help="first graph file")
    d.add_argument("--graph-b", required=True, help="second graph file")
    d.add_argument("--order", type=int, choices=(1, 2), default=2, help="FGW order p")
    d.add_argument("--plan-out", help="CSV path for the transport plan")
    d.set_defaults(func=_cmd_distance)

    v = sub.add_parser("eval", help="k-NN evaluation of embeddings")
    v.add_argument("--embeddings", required=True, help="embeddings CSV to evaluate")
    v.add_argument("--train-embeddings", help="fit k-NN on these codes and test on --embeddings")
    v.add_argument("--folds", type=int, default=10, help="cross-validation folds")
    v.add_argument("--knn", type=int, default=5, help="number of neighbours")
    v.add_argument("--seed", type=int, help="fold seed (default 42)")
    v.add_argument("--report-out", help="CSV path for per-fold accuracies")
    v.set_defaults(func=_cmd_eval)

    i = sub.add_parser("inspect", help="summarise a checkpoint")
    i.add_argument("--model", required=True, help="checkpoint path")
    i.set_defaults(func=_cmd_inspect)
    return p


def run(argv=None):
    """Run the CLI and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InvalidInputError, ParseError, CheckpointError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())
