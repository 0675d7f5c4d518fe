"""Command-line entry point: ``dropairs <subcommand> [flags]``.

Floats are written with the shortest round-trip representation. Exit codes:
0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import math
import statistics
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dro, mining
from .core import DroConfig, DroPairsError, EmbeddingBatch, build_pair_system, similarity
from .data import format_float, gen_synthetic, load_dataset
from .evaluation import SWEEP_METHODS, imbalance_sweep, recall_at_k
from .losses import loss_matrix
from .model import TrainConfig, dump_model, forward, parse_model, train
from .verify import run_checks

DRO_CHOICES = ("avg", "max", "topk", "topk-pn", "kl", "chi2", "kl-grouped", "ms")
BENCH_METHODS = ("avg", "max", "topk", "topk-pn", "kl", "chi2", "kl-grouped", "ms",
                 "semihard", "dws")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _str_list(text):
    return [v for v in text.split(",") if v]


def _add_data(p):
    g = p.add_argument_group("data (a CSV file, or synthetic clusters when --data is absent)")
    g.add_argument("--data", help="CSV rows 'label,x1,...,xD'")
    g.add_argument("--classes", type=int, default=10)
    g.add_argument("--per-class", type=int, default=60)
    g.add_argument("--dim", type=int, default=16)
    g.add_argument("--spread", type=float, default=0.5)


def _add_dro(p):
    g = p.add_argument_group("pair loss and uncertainty set")
    g.add_argument("--loss", choices=("margin", "binomial"), default="margin")
    g.add_argument("--dro", choices=DRO_CHOICES, default="topk-pn")
    g.add_argument("--k", type=int, help="K for topk/topk-pn (default 2B)")
    g.add_argument("--gamma", type=float, default=0.1)
    g.add_argument("--gamma-pos", type=float)
    g.add_argument("--gamma-neg", type=float)
    g.add_argument("--rho", type=float, default=0.25)
    g.add_argument("--m", type=float, default=0.2)
    g.add_argument("--lambda", dest="lam", type=float, default=0.5)
    g.add_argument("--alpha", type=float, default=2.0)
    g.add_argument("--beta", type=float, default=50.0)
    g.add_argument("--include-self-pairs", action="store_true")
    g.add_argument("--keep-zero-loss", action="store_true")


def _add_train(p):
    g = p.add_argument_group("training")
    g.add_argument("--classes-per-batch", type=int, default=4)
    g.add_argument("--m-per-class", type=int, default=5)
    g.add_argument("--epochs", type=int, default=20)
    g.add_argument("--lr", type=float, default=0.05)
    g.add_argument("--embed-dim", type=int, default=16)
    g.add_argument("--hidden", type=int, default=0, help="hidden ReLU width (0 = linear)")
    g.add_argument("--miner", choices=("semihard", "dws", "ms"),
                   help="replace the DRO solve by a mining baseline")


def build_parser():
    parser = argparse.ArgumentParser(prog="dropairs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    p = sub.add_parser("weights", help="per-pair losses and DRO weights for one batch")
    _add_data(p)
    _add_dro(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output CSV (default stdout)")

    p = sub.add_parser("train", help="train an embedding model")
    _add_data(p)
    _add_dro(p)
    _add_train(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for history.csv and model.txt (default: history to stdout)")

    p = sub.add_parser("eval", help="recall@k of raw features or of a trained model")
    _add_data(p)
    p.add_argument("--model", help="model.txt written by train")
    p.add_argument("--ks", type=_int_list, default=[1, 2, 4, 8])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("verify", help="run the self-check suites")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sweep", help="recall@1 versus batch size (pair imbalance)")
    _add_data(p)
    _add_dro(p)
    _add_train(p)
    p.add_argument("--batch-sizes", type=_int_list, default=[20, 40, 80])
    p.add_argument("--methods", type=_str_list, default=list(SWEEP_METHODS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("bench", help="time each weighting method per iteration")
    _add_dro(p)
    p.add_argument("--batch-sizes", type=_int_list, default=[80, 160, 320, 640])
    p.add_argument("--methods", type=_str_list, default=list(BENCH_METHODS))
    p.add_argument("--m-per-class", type=int, default=5)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    return parser


def dro_config(args, batch_size, variant=None):
    variant = variant or args.dro
    variant = "ms-recovery" if variant == "ms" else variant
    k = args.k if args.k is not None else 2 * batch_size
    return DroConfig(variant=variant, K=k, gamma=args.gamma, gamma_pos=args.gamma_pos,
                     gamma_neg=args.gamma_neg, rho=args.rho, m=args.m, lam=args.lam,
                     alpha=args.alpha, beta=args.beta, keep_zero_loss=args.keep_zero_loss)


def train_config(args):
    b = args.classes_per_batch * args.m_per_class
    return TrainConfig(classes_per_batch=args.classes_per_batch,
                       instances_per_class=args.m_per_class, epochs=args.epochs,
                       learning_rate=args.lr, seed=args.seed, dro=dro_config(args, b),
                       loss_kind=args.loss, miner=args.miner, embed_dim=args.embed_dim,
                       hidden=args.hidden, include_self=args.include_self_pairs)


def _dataset(args):
    if args.data:
        return load_dataset(args.data)
    return gen_synthetic(args.classes, args.per_class, args.dim, args.spread, seed=args.seed)


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _csv(header, rows):
    def cell(v):
        return format_float(v) if isinstance(v, float) else str(v)
    return header + "\n" + "".join(",".join(cell(v) for v in r) + "\n" for r in rows)


def cmd_weights(args):
    ds = _dataset(args)
    batch = EmbeddingBatch.create(ds.features, ds.features, ds.labels)
    pairs = build_pair_system(batch.labels, args.include_self_pairs)
    cfg = dro_config(args, batch.size)
    losses = loss_matrix(similarity(batch), pairs, cfg, args.loss)
    w = dro.solve(losses, pairs, cfg)
    rows = [(int(i), int(j), int(y), float(l), float(p))
            for i, j, y, l, p in zip(pairs.anchor, pairs.other, pairs.y, losses.loss, w.weights)]
    _emit(_csv("i,j,y,loss,weight", rows), args.out)


def history_csv(history):
    return _csv("epoch,robust_loss,recall1", [(r.epoch, r.robust_loss, r.recall1) for r in history])


def cmd_train(args):
    model, history = train(_dataset(args), train_config(args))
    text = history_csv(history)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "history.csv").write_text(text)
        (out / "model.txt").write_text(dump_model(model))
    else:
        sys.stdout.write(text)


def cmd_eval(args):
    ds = _dataset(args)
    feats = ds.features
    if args.model:
        feats = forward(parse_model(Path(args.model).read_text()), feats)
    rec = recall_at_k(feats, ds.labels, args.ks)
    _emit(_csv("k,recall", [(k, rec[k]) for k in args.ks]), args.out)


def cmd_verify(args):
    results = run_checks(args.seed)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}")
    return 0 if all(r.passed for r in results) else 1


def cmd_sweep(args):
    base = train_config(args)
    unknown = set(args.methods) - set(SWEEP_METHODS)
    if unknown:
        raise DroPairsError(f"unknown sweep methods {sorted(unknown)}; choose from {SWEEP_METHODS}")
    rows = imbalance_sweep(_dataset(args), base, args.batch_sizes, args.methods)
    _emit(_csv("B,ratio,method,recall1",
               [(r.batch_size, r.ratio, r.method, r.recall1) for r in rows]), args.out)


def bench_iteration(method, sim, pairs, cfg, loss_kind="margin", d=64, seed=0):
    """One weighting pass: pair losses, weights and subgradient coefficients."""
    losses = loss_matrix(sim, pairs, cfg, loss_kind)
    if method == "semihard":
        w = mining.semihard_select(sim, pairs, cfg.lam, cfg.m)
    elif method == "dws":
        w = mining.dws_select(sim, pairs, d, 8, rng_seed=seed, losses=losses)
    else:
        w = dro.solve(losses, pairs, cfg)
    return dro.weighted_subgradient_coeffs(w, losses)


def cmd_bench(args):
    rng = np.random.default_rng(args.seed)
    rows = []
    for b in args.batch_sizes:
        labels = np.repeat(np.arange(math.ceil(b / args.m_per_class)), args.m_per_class)[:b]
        feats = rng.standard_normal((b, args.dim))
        batch = EmbeddingBatch.create(feats, feats, labels)
        pairs = build_pair_system(labels, args.include_self_pairs)
        sim = similarity(batch)
        for method in args.methods:
            variant = "avg" if method in ("semihard", "dws") else method
            if variant not in DRO_CHOICES:
                raise DroPairsError(f"unknown bench method {method!r}")
            cfg = dro_config(args, b, variant)
            times = []
            for _ in range(args.repeats):
                t0 = time.perf_counter()
                bench_iteration(method, sim, pairs, cfg, args.loss, args.dim, args.seed)
                times.append(time.perf_counter() - t0)
            rows.append((method, b, 1000.0 * statistics.median(times)))
    _emit(_csv("method,B,millis", rows), args.out)


COMMANDS = {
    "weights": cmd_weights,
    "train": cmd_train,
    "eval": cmd_eval,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "bench": cmd_bench,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args) or 0
    except (DroPairsError, ValueError, OSError) as exc:
        print(f"dropairs {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())
