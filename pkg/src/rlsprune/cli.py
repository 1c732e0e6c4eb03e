"""Command-line entry point for training, pruning and metrics emission."""

import argparse
import glob
import os
import sys

from . import data, network, report, train
from .errors import ConfigError, FormatError, SingularityError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SINGULAR = 4


def _parse_bool(value):
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def read_config_file(path):
    """Flat key=value file mirroring the CLI flags; '#' starts a comment."""
    values = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                key, value = line.split("=", 1)
                values[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return values


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rlsprune",
        description="Train an FNN/CNN with RLS optimization and multi-shot "
                    "structured pruning (or the momentum baseline).")
    parser.add_argument("--config", help="flat key=value config file; flags override")
    parser.add_argument("--dataset", choices=["mnist", "cifar10", "cifar10-format"])
    parser.add_argument("--data-dir")
    parser.add_argument("--arch", choices=["fnn-mnist", "minivgg"])
    parser.add_argument("--optimizer", choices=["rls", "momentum"])
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--lambda", dest="lam", type=float)
    parser.add_argument("--k", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--eta", help="scalar or comma-separated per-layer list")
    parser.add_argument("--xi", type=float)
    parser.add_argument("--q", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--delta", type=float)
    parser.add_argument("--metrics-out")
    parser.add_argument("--checkpoint-out")
    parser.add_argument("--resume")
    parser.add_argument("--train-limit", type=int,
                        help="use only the first N training samples")
    parser.add_argument("--no-figures", action="store_true",
                        help="skip rendering metric figures")
    parser.add_argument("--prune-on-epoch-mean", action="store_true",
                        help="gate pruning on the trailing-epoch mean loss")
    return parser


DEFAULTS = {
    "dataset": "mnist", "arch": "fnn-mnist", "optimizer": "rls",
    "epochs": 200, "batch_size": 128, "lam": 1.0, "k": 0.1, "alpha": 0.5,
    "eta": "1.0", "xi": 0.4, "q": 30, "seed": 0, "delta": 1.0,
    "metrics_out": None, "checkpoint_out": None, "resume": None,
    "data_dir": None, "train_limit": None, "no_figures": False,
    "prune_on_epoch_mean": False,
}

_CASTS = {"epochs": int, "batch_size": int, "q": int, "seed": int,
          "train_limit": int, "lam": float, "k": float, "alpha": float,
          "xi": float, "delta": float,
          "no_figures": _parse_bool, "prune_on_epoch_mean": _parse_bool}


def merge_options(args):
    """Defaults < config file < explicit flags."""
    merged = dict(DEFAULTS)
    if args.config:
        for key, value in read_config_file(args.config).items():
            if key not in merged:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = _CASTS.get(key, str)(value)
    for key in merged:
        cli_value = getattr(args, key, None)
        if cli_value is not None and cli_value is not False:
            merged[key] = cli_value
    return merged


def _parse_eta(text):
    parts = [p for p in str(text).split(",") if p.strip()]
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"bad eta value {text!r}") from exc
    if not values:
        raise ConfigError("eta must not be empty")
    return values[0] if len(values) == 1 else values


def load_datasets(dataset, data_dir, train_limit=None):
    if data_dir is None:
        raise ConfigError("--data-dir is required")
    if dataset == "mnist":
        train_set = data.load_mnist_idx(
            os.path.join(data_dir, "train-images-idx3-ubyte"),
            os.path.join(data_dir, "train-labels-idx1-ubyte"))
        test_set = data.load_mnist_idx(
            os.path.join(data_dir, "t10k-images-idx3-ubyte"),
            os.path.join(data_dir, "t10k-labels-idx1-ubyte"))
    elif dataset == "cifar10":
        batches = sorted(glob.glob(os.path.join(data_dir, "data_batch_*.bin")))
        test_files = [os.path.join(data_dir, "test_batch.bin")]
        if not batches:
            raise FormatError(f"no data_batch_*.bin files in {data_dir}")
        train_set = data.load_cifar_binary(batches)
        test_set = data.load_cifar_binary(test_files)
    else:  # cifar10-format: any pre-converted binary in the CIFAR record layout
        train_files = sorted(glob.glob(os.path.join(data_dir, "train*.bin"))) or \
            sorted(glob.glob(os.path.join(data_dir, "data_batch_*.bin")))
        test_files = sorted(glob.glob(os.path.join(data_dir, "test*.bin")))
        if not train_files or not test_files:
            raise FormatError(f"no train*/test* .bin files in {data_dir}")
        train_set = data.load_cifar_binary(train_files)
        test_set = data.load_cifar_binary(test_files)
    if train_limit:
        train_set = data.Dataset(images=train_set.images[:train_limit],
                                 labels=train_set.labels[:train_limit])
    return train_set, test_set


def build_arch(arch, train_set):
    if arch == "fnn-mnist":
        features = int(train_set.images[0].size)
        return network.fnn_arch(in_features=features), (features,)
    shape = tuple(train_set.images.shape[1:])
    return network.minivgg_arch(in_channels=shape[0]), shape


def run(options):
    config = train.TrainConfig(
        batch_size=options["batch_size"], lam=options["lam"], k=options["k"],
        alpha=options["alpha"], eta=_parse_eta(options["eta"]),
        delta=options["delta"], xi=options["xi"], q=options["q"],
        epochs=options["epochs"], seed=options["seed"],
        optimizer=options["optimizer"],
        prune_on_epoch_mean=options["prune_on_epoch_mean"])
    train_set, test_set = load_datasets(options["dataset"], options["data_dir"],
                                        options["train_limit"])
    topologies, input_shape = build_arch(options["arch"], train_set)
    result = train.train(config, topologies, train_set, test_set,
                         input_shape=input_shape, resume=options["resume"],
                         checkpoint_path=options["checkpoint_out"])
    if options["metrics_out"]:
        files = report.emit_metrics(result.metrics, result.report,
                                    options["metrics_out"],
                                    figures=not options["no_figures"])
        for path in files:
            print(f"wrote {path}")
    final = result.metrics.epochs[-1]
    print(f"final epoch {final.epoch}: loss {final.loss:.5f}, "
          f"precision {final.precision:.2f}%, "
          f"prune events {len(result.report.events)}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        options = merge_options(args)
        return run(options)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SingularityError as exc:
        print(f"numerical singularity: {exc}", file=sys.stderr)
        return EXIT_SINGULAR


if __name__ == "__main__":
    sys.exit(main())
