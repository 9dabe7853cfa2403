"""Experiment runner CLI.

Subcommands: ``generate`` (synthetic dataset files), ``train`` (robust
training plus optional baselines, emitting metrics.jsonl and summary.json),
``eval`` (score saved checkpoints against a labeled dataset) and
``oracle-check`` (closed-form vs brute-force self-checks).

Output paths resolve against $CROWDCDRO_OUTPUT_ROOT when set. A config file
is a flat JSON object whose keys match the long option names (dashes or
underscores); explicit command-line flags win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import io as dataio
from .checks import run_all
from .estimators import DawidSkeneClassifier, MajorityVoteClassifier
from .nets import load_checkpoint, save_checkpoint
from .simulate import annotate, annotator_group, make_gaussian_dataset, parse_preset
from .trainer import TrainConfig, run_training

OUTPUT_ROOT_ENV = "CROWDCDRO_OUTPUT_ROOT"


class ConfigError(Exception):
    pass


def resolve_out(path):
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def load_config_file(path):
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a flat JSON object")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def merged_options(args, file_keys):
    """File values fill in options the command line left at their default."""
    merged = dict(file_keys)
    for key, value in vars(args).items():
        if key in ("func", "config"):
            continue
        if value is not None:
            merged[key] = value
    return merged


def cmd_generate(args):
    opts = merged_options(args, load_config_file(args.config))
    outdir = resolve_out(opts["out"])
    preset = opts.get("preset", "idn-mid-r5")
    n = int(opts.get("n", 2000))
    d = int(opts.get("d", 10))
    k = int(opts.get("k", 4))
    separation = float(opts.get("separation", 3.5))
    labels_per_instance = int(opts.get("labels_per_instance", 1))
    n_test = int(opts.get("n_test", 0))
    seed = int(opts.get("seed", 0))

    try:
        level, pool = parse_preset(preset)
        annotators = annotator_group(level, pool, seed=seed + 1)
        features, labels, _ = make_gaussian_dataset(n, d, k, separation, seed)
        dataset = annotate(features, labels, annotators, labels_per_instance, seed + 2)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    manifest = {
        "preset": preset,
        "n": n,
        "d": d,
        "num_classes": k,
        "num_annotators": pool,
        "separation": separation,
        "labels_per_instance": labels_per_instance,
        "seed": seed,
        "n_test": n_test,
    }
    dataio.write_dataset(outdir, dataset, manifest)
    if n_test > 0:
        test_x, test_y, _ = make_gaussian_dataset(n_test, d, k, separation, seed + 3)
        dataio.write_features(os.path.join(outdir, "test_features.csv"), test_x)
        dataio.write_truth(os.path.join(outdir, "test_truth.csv"), test_y)
    print(f"wrote dataset ({n} instances, preset {preset}) to {outdir}")
    return 0


def build_train_config(opts, num_classes):
    fields = (
        "epochs", "warmup_epochs", "lrt_threshold", "lam", "epsilon", "kappa",
        "p", "transform", "arch", "hidden", "lr", "optimizer", "batch_size",
        "seed", "small_loss_ratio", "smoothing", "val_fraction",
    )
    kwargs = {f: opts[f] for f in fields if f in opts and opts[f] is not None}
    try:
        config = TrainConfig(**kwargs)
        config.validate_for(num_classes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return config


def cmd_train(args):
    opts = merged_options(args, load_config_file(args.config))
    datadir = opts.get("data")
    if not datadir or not os.path.isdir(datadir):
        raise ConfigError(f"dataset directory not found: {datadir!r}")
    for required in ("features.csv", "annotations.csv"):
        if not os.path.exists(os.path.join(datadir, required)):
            raise ConfigError(f"missing {required} in {datadir}")
    outdir = resolve_out(opts.get("out", "."))
    os.makedirs(outdir, exist_ok=True)

    dataset, _ = dataio.read_dataset(datadir)
    config = build_train_config(opts, dataset.k)

    test_x = test_y = None
    test_feat = os.path.join(datadir, "test_features.csv")
    test_truth = os.path.join(datadir, "test_truth.csv")
    if os.path.exists(test_feat) and os.path.exists(test_truth):
        test_x = dataio.read_features(test_feat)
        test_y = dataio.read_truth(test_truth)

    result = run_training(dataset, config, test_features=test_x, test_labels=test_y)
    dataio.write_metrics(os.path.join(outdir, "metrics.jsonl"), result.history)
    save_checkpoint(result.model_a, os.path.join(outdir, "model_a.npz"))
    save_checkpoint(result.model_b, os.path.join(outdir, "model_b.npz"))

    summary = {
        "seed": config.seed,
        "epsilon": config.epsilon,
        "lrt_threshold": config.lrt_threshold,
        "adaptcdrp": {
            "val_acc": result.val_acc,
            "best_epoch": result.best_epoch,
            "test_acc": result.test_acc,
            "gamma_a": result.extras.get("gamma_a"),
            "gamma_b": result.extras.get("gamma_b"),
            "small_loss_ratio": result.extras.get("small_loss_ratio"),
        },
    }

    baselines = opts.get("baseline") or []
    if isinstance(baselines, str):
        baselines = [baselines]
    X = dataset.features
    Y = dataset.annotation_matrix()
    for name in baselines:
        if name == "mv":
            est = MajorityVoteClassifier(
                epochs=config.epochs, warmup_epochs=config.warmup_epochs,
                arch=config.arch, hidden=config.hidden, lr=config.lr,
                optimizer=config.optimizer, batch_size=config.batch_size,
                seed=config.seed, val_fraction=config.val_fraction,
            )
            key = "ce_mv"
        elif name == "em":
            est = DawidSkeneClassifier(
                epochs=config.epochs, warmup_epochs=config.warmup_epochs,
                arch=config.arch, hidden=config.hidden, lr=config.lr,
                optimizer=config.optimizer, batch_size=config.batch_size,
                seed=config.seed, val_fraction=config.val_fraction,
            )
            key = "ce_em"
        else:
            raise ConfigError(f"unknown baseline {name!r} (expected 'mv' or 'em')")
        est.fit(X, Y, test_features=test_x, test_labels=test_y)
        summary[key] = {
            "val_acc": est.result_.val_acc,
            "best_epoch": est.result_.best_epoch,
            "test_acc": est.result_.test_acc,
        }

    dataio.write_summary(os.path.join(outdir, "summary.json"), summary)
    line = {k: v for k, v in summary.items() if isinstance(v, dict)}
    print(json.dumps(line, sort_keys=True))
    return 0


def cmd_eval(args):
    opts = merged_options(args, load_config_file(args.config))
    datadir = opts.get("data")
    if not datadir or not os.path.isdir(datadir):
        raise ConfigError(f"dataset directory not found: {datadir!r}")
    truth_path = os.path.join(datadir, "truth.csv")
    if not os.path.exists(truth_path):
        raise ConfigError(f"eval needs truth.csv in {datadir}")
    features = dataio.read_features(os.path.join(datadir, "features.csv"))
    labels = dataio.read_truth(truth_path)
    models = [load_checkpoint(p) for p in opts["checkpoint"]]
    probs = sum(m.predict_proba(features) for m in models) / len(models)
    acc = float(np.mean(np.argmax(probs, axis=1) == labels))
    print(json.dumps({"accuracy": acc, "n": int(labels.size)}, sort_keys=True))
    return 0


def cmd_oracle_check(args):
    results = run_all(quick=args.quick)
    failed = 0
    for name, passed, detail in results:
        status = "PASS" if passed else "FAIL"
        print(f"{status} {name}: {detail}")
        failed += 0 if passed else 1
    return 1 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="crowdcdro",
        description="Robust learning from noisy crowdsourced labels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic dataset")
    gen.add_argument("--out", required=True)
    gen.add_argument("--config")
    gen.add_argument("--preset", help="annotator preset, e.g. idn-mid-r5")
    gen.add_argument("--n", type=int)
    gen.add_argument("--d", type=int)
    gen.add_argument("--k", type=int)
    gen.add_argument("--separation", type=float)
    gen.add_argument("--labels-per-instance", type=int, dest="labels_per_instance")
    gen.add_argument("--n-test", type=int, dest="n_test")
    gen.add_argument("--seed", type=int)
    gen.set_defaults(func=cmd_generate)

    train = sub.add_parser("train", help="run robust training on a dataset")
    train.add_argument("--data", help="dataset directory")
    train.add_argument("--out")
    train.add_argument("--config")
    train.add_argument("--seed", type=int)
    train.add_argument("--epsilon", type=float)
    train.add_argument("--lrt-threshold", type=float, dest="lrt_threshold")
    train.add_argument("--lambda", type=float, dest="lam")
    train.add_argument("--epochs", type=int)
    train.add_argument("--warmup-epochs", type=int, dest="warmup_epochs")
    train.add_argument("--lr", type=float)
    train.add_argument("--batch-size", type=int, dest="batch_size")
    train.add_argument("--arch", choices=["linear", "mlp"])
    train.add_argument("--hidden", type=int)
    train.add_argument("--transform", choices=["linear", "clipped-log"])
    train.add_argument("--kappa", type=float)
    train.add_argument("--small-loss-ratio", type=float, dest="small_loss_ratio")
    train.add_argument(
        "--baseline", action="append", choices=["mv", "em"],
        help="also train a baseline (repeatable)",
    )
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="score checkpoints on a labeled dataset")
    ev.add_argument("--data", required=True)
    ev.add_argument("--config")
    ev.add_argument(
        "--checkpoint", action="append", required=True,
        help="model checkpoint (.npz); repeat for an ensemble",
    )
    ev.set_defaults(func=cmd_eval)

    oc = sub.add_parser("oracle-check", help="run closed-form vs brute-force checks")
    oc.add_argument("--quick", action="store_true", help="smaller trial counts")
    oc.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
