"""Command line entry point: ``resmps <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data or format
error, 3 numerical divergence.
"""

import argparse
import sys

import numpy as np

from . import checkpoint, data, diagnostics, expansion, pruning
from .config import TrainConfig, load_config
from .errors import (ConfigError, ConsistencyError, DivergenceError, DomainError,
                     FormatError, ShapeError)
from .models import ModelKind, accuracy, mps_from_sresmps, residual_parameter_count
from .training import RunMetrics, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(float(v)) for v in text.split(",") if v.strip()]


def _add_config_flags(p):
    p.add_argument("--config", help="flat JSON file with TrainConfig keys")
    p.add_argument("--model", choices=["sresmps", "aresmps", "mps"])
    p.add_argument("--chi", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--dropout", type=float)
    p.add_argument("--eps-init", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--feature-map", choices=["affine", "norm_one"])
    p.add_argument("--activation", choices=["relu", "none"])
    p.add_argument("--subset", type=int, help="down-sample images to this many features")
    p.add_argument("--train-limit", type=int)
    p.add_argument("--test-limit", type=int)
    p.add_argument("--grad-chunk", type=int)


def _config(args):
    keys = ("model", "chi", "epochs", "batch_size", "lr", "optimizer", "dropout", "eps_init",
            "seed", "feature_map", "activation", "subset", "train_limit", "test_limit",
            "grad_chunk")
    overrides = {k: getattr(args, k, None) for k in keys}
    return load_config(getattr(args, "config", None), overrides)


def build_parser():
    parser = _Parser(prog="resmps", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--data", required=True, help="directory with MNIST-layout IDX files")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--metrics", default="-", help="TSV metrics path ('-' for stdout)")
    _add_config_flags(p)

    p = sub.add_parser("eval", help="test accuracy of a checkpoint")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--subset", type=int)

    p = sub.add_parser("prune", help="magnitude pruning with retraining")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="-", help="TSV report path")
    p.add_argument("--save", help="write the final pruned checkpoint here")
    p.add_argument("--schedule", type=_ints, help="comma-separated live counts")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--final-fraction", type=float, default=0.01)
    p.add_argument("--retrain-epochs", type=int, default=5)
    _add_config_flags(p)

    p = sub.add_parser("expand", help="polynomial expansion report of an sResMPS")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--kmax", type=int, required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--method", choices=["graded", "enumerate"], default="graded")
    p.add_argument("--retrain", action="store_true", help="also train each truncated model")
    _add_config_flags(p)

    p = sub.add_parser("init-sweep", help="test accuracy versus init scale")
    p.add_argument("--data", required=True)
    p.add_argument("--eps", type=_floats, default=[1e-4, 1e-3, 1e-2, 1e-1, 0.5])
    p.add_argument("--checkpoints", type=_ints, default=[10, 20, 50])
    p.add_argument("--out", default="-")
    _add_config_flags(p)

    p = sub.add_parser("diagnose", help="channel norms and hidden-state trajectories")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", default="-", help="channel-norm TSV path")
    p.add_argument("--trajectory", help="write hidden-state TSV here (needs --data)")
    p.add_argument("--data")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--endpoints", action="store_true", help="only the final hidden state")
    p.add_argument("--subset", type=int)

    p = sub.add_parser("convert", help="rewrite an sResMPS checkpoint as an MPS")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--to", choices=["mps"], required=True)
    p.add_argument("--out", required=True)
    return parser


def _emit(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(path, "w") as f:
            f.write(text)


def _datasets(directory, subset=None, train_limit=None, test_limit=None, seed=0):
    train_set, test_set = data.load_dir(directory)
    if subset:
        train_set, test_set = data.downsample(train_set, subset), data.downsample(test_set, subset)
    return data.take(train_set, train_limit, seed), data.take(test_set, test_limit, seed + 1)


def _cmd_train(args):
    cfg = _config(args)
    train_set, test_set = _datasets(args.data, cfg.subset, cfg.train_limit, cfg.test_limit, cfg.seed)
    out = sys.stdout if args.metrics == "-" else open(args.metrics, "w")
    try:
        out.write(RunMetrics.TSV_HEADER + "\n")

        def log(m, _params):
            out.write(RunMetrics.tsv_row(m) + "\n")
            out.flush()

        params, _ = train(train_set, cfg, test_set=test_set, on_epoch=log)
    finally:
        if out is not sys.stdout:
            out.close()
    checkpoint.save(params, args.out)
    return EXIT_OK


def _cmd_eval(args):
    params = checkpoint.load(args.inp)
    train_set, test_set = _datasets(args.data, args.subset)
    dataset = test_set if args.split == "test" else train_set
    print(f"accuracy\t{accuracy(params, dataset):.6f}")
    return EXIT_OK


def _cmd_prune(args):
    params = checkpoint.load(args.inp)
    cfg = _config(args).replace(epochs=args.retrain_epochs)
    train_set, test_set = _datasets(args.data, cfg.subset, cfg.train_limit, cfg.test_limit, cfg.seed)
    total = residual_parameter_count(params)
    schedule = args.schedule or pruning.geometric_schedule(total, args.steps, args.final_fraction)
    steps, params, _ = pruning.prune_and_retrain(params, schedule, cfg, train_set, test_set)
    _emit(args.out, pruning.report_tsv(steps))
    if args.save:
        checkpoint.save(params, args.save)
    return EXIT_OK


def _cmd_expand(args):
    params = checkpoint.load(args.inp)
    if params.kind is not ModelKind.SRESMPS:
        raise DomainError("expand needs an sResMPS checkpoint")
    cfg = _config(args)
    train_set, test_set = _datasets(args.data, cfg.subset, cfg.train_limit, cfg.test_limit, cfg.seed)
    if test_set.n_features != params.n_features:
        raise ConsistencyError(f"checkpoint has N={params.n_features} but data has "
                               f"{test_set.n_features} features; pass the matching --subset")
    norms = expansion.order_norm_profile(params, test_set.features, args.kmax, method=args.method)
    rows = []
    for k in range(args.kmax + 1):
        model = expansion.TruncatedModel(params, k)
        row = [k, float(norms[k]), expansion.truncated_accuracy(model, test_set, method=args.method)]
        if args.retrain:
            retrained, _ = expansion.retrain_truncated(train_set, cfg, k)
            row.append(expansion.truncated_accuracy(expansion.TruncatedModel(retrained, k), test_set))
        rows.append(row)
    _emit(args.out, expansion.report_tsv(rows, retrained=args.retrain))
    return EXIT_OK


def _cmd_init_sweep(args):
    cfg = _config(args)
    train_set, test_set = _datasets(args.data, cfg.subset, cfg.train_limit, cfg.test_limit, cfg.seed)
    rows = diagnostics.init_sweep(args.eps, cfg, train_set, test_set, args.checkpoints)
    _emit(args.out, diagnostics.sweep_tsv(rows))
    return EXIT_OK


def _cmd_diagnose(args):
    params = checkpoint.load(args.inp)
    if params.kind is not ModelKind.ARESMPS:
        _emit(args.out, diagnostics.channel_norm_tsv(diagnostics.channel_norm_profile(params)))
    if args.trajectory:
        if not args.data:
            raise UsageError("--trajectory needs --data")
        _, test_set = _datasets(args.data, args.subset)
        n = min(args.samples, len(test_set))
        diagnostics.export_trajectory(params, test_set.features[:n], test_set.labels[:n],
                                      args.trajectory, endpoints_only=args.endpoints)
    return EXIT_OK


def _cmd_convert(args):
    params = checkpoint.load(args.inp)
    if params.kind is not ModelKind.SRESMPS:
        raise DomainError("only sResMPS checkpoints can be converted to MPS")
    checkpoint.save(mps_from_sresmps(params), args.out)
    return EXIT_OK


COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "prune": _cmd_prune,
    "expand": _cmd_expand,
    "init-sweep": _cmd_init_sweep,
    "diagnose": _cmd_diagnose,
    "convert": _cmd_convert,
}


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        np.seterr(over="ignore", invalid="ignore")
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (FormatError, ConsistencyError, ShapeError, DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run())
