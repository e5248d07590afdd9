"""Command-line entry point: ``llpfc {make-bags,train,eval,verify,baseline-kl}``.

Settings come from an optional INI file (``--config``): keys in
``[DEFAULT]`` apply to every subcommand, keys in a section named after the
subcommand apply to it alone, and a command-line flag of the same name
overrides both. Dashes and underscores in key names are interchangeable.
"""

import argparse
import configparser
import json
import sys

import numpy as np

from .bags import generate_bags, pooled_prior, read_bags_jsonl, read_dataset_csv, write_bags_jsonl
from .baselines import KLBaselineConfig, train_kl
from .errors import AssumptionViolation, ConfigError, ConvergenceFailure, DataError
from .models import Classifier, evaluate
from .trainer import TrainConfig, config_hash, train, train_supervised
from .verify import run_suite

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_ASSUMPTION = 4
EXIT_VERIFY = 5


def _int_list(text):
    text = str(text).strip()
    return tuple(int(v) for v in text.split(",") if v.strip()) if text else ()


def _float_list(text):
    text = str(text).strip()
    return tuple(float(v) for v in text.split(",") if v.strip()) if text else None


def _bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# option name -> (type, default, help)
COMMON = {
    "seed": (int, 0, "random seed (unsigned 64-bit)"),
}
DATA = {
    "dataset": (str, None, "training CSV: feature columns then an integer label column"),
    "bags": (str, None, "bags JSONL file"),
    "out": (str, None, "output path"),
}
OPTIM = {
    "epochs": (int, 100, "training epochs"),
    "lr": (float, 0.01, "initial learning rate"),
    "lr_decay_factor": (float, 0.1, "learning-rate decay factor"),
    "lr_decay_epochs": (_int_list, None, "comma-separated decay epochs (default 50%%,75%%)"),
    "momentum": (float, 0.9, "SGD momentum"),
    "weight_decay": (float, 0.0, "L2 weight decay"),
    "hidden": (_int_list, (), "comma-separated hidden widths (empty: softmax-linear)"),
    "test": (str, None, "labelled test CSV for per-epoch accuracy"),
    "eval_train": (_bool, False, "also log training accuracy (reads training labels)"),
    "model_out": (str, None, "model path (default: <out>.model)"),
}
SUBCOMMANDS = {
    "make-bags": {
        **COMMON, **DATA,
        "bag_size": (int, 64, "points per bag"),
        "n_bags": (int, None, "number of bags (default: as many as fit)"),
    },
    "train": {
        **COMMON, **DATA, **OPTIM,
        "mode": (str, "uniform", "ideal, uniform, approx, or supervised (control)"),
        "weights": (str, "uniform", "group weights: uniform or harmonic"),
        "regroup_every": (int, 20, "epochs between regroupings"),
        "batch_size": (int, 128, "points per minibatch"),
        "sigma": (_float_list, None, "comma-separated clean prior for ideal mode"),
        "ideal_max_retries": (int, 50, "fresh partitions tried in ideal mode"),
    },
    "baseline-kl": {
        **COMMON, **DATA, **OPTIM,
        "bags_per_minibatch": (int, 2, "bags per minibatch"),
    },
    "eval": {
        "dataset": (str, None, "labelled CSV to evaluate on"),
        "model": (str, None, "model file written by train"),
    },
    "verify": {
        **COMMON,
        "trials": (int, 10_000, "Monte Carlo trials per check"),
        "out": (str, None, "optional JSON report path"),
        "norm_perturbation": (float, 0.0, argparse.SUPPRESS),
    },
}


def build_parser():
    parser = argparse.ArgumentParser(prog="llpfc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, options in SUBCOMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with defaults for this command")
        for key, (_, _, help_text) in options.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=help_text)
    return parser


def resolve_options(command, args):
    """Merge defaults, the config file and the flags, in increasing priority."""
    options = SUBCOMMANDS[command]
    raw = {}
    if args.config:
        cp = configparser.ConfigParser()
        try:
            if not cp.read(args.config):
                raise ConfigError(f"cannot read config file {args.config}")
        except configparser.Error as exc:
            raise ConfigError(f"{args.config}: {exc}") from None
        section = cp[command] if cp.has_section(command) else cp.defaults()
        for key, value in section.items():
            norm = key.replace("-", "_")
            if norm not in options:
                raise ConfigError(f"{args.config}: unknown key {key!r} for {command}")
            raw[norm] = value
    for key in options:
        flag = getattr(args, key)
        if flag is not None:
            raw[key] = flag
    resolved = {}
    for key, (conv, default, _) in options.items():
        if key in raw:
            try:
                resolved[key] = conv(raw[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
        else:
            resolved[key] = default
    return resolved


def _require(opts, *keys):
    for key in keys:
        if opts.get(key) is None:
            raise ConfigError(f"--{key.replace('_', '-')} is required")


def _emit(obj):
    print(json.dumps(obj, sort_keys=True))


def cmd_make_bags(opts):
    _require(opts, "dataset", "out")
    ds = read_dataset_csv(opts["dataset"])
    n_bags = opts["n_bags"] if opts["n_bags"] is not None else ds.n // opts["bag_size"]
    rng = np.random.default_rng(opts["seed"])
    inst = generate_bags(ds, opts["bag_size"], n_bags, rng, seed=opts["seed"])
    effective = {"bag_size": opts["bag_size"], "n_bags": n_bags, "seed": opts["seed"]}
    write_bags_jsonl(opts["out"], inst, {"bag_size": opts["bag_size"],
                                         "config_hash": config_hash(effective)})
    _emit({"n_bags": inst.n_bags, "sizes": [b.size for b in inst.bags],
           "sigma_hat": pooled_prior(inst).tolist(), "seed": opts["seed"]})
    return EXIT_OK


def _load_instance(opts):
    _require(opts, "dataset", "bags", "out")
    ds = read_dataset_csv(opts["dataset"])
    inst, _ = read_bags_jsonl(opts["bags"], ds)
    test = read_dataset_csv(opts["test"], ds.n_classes) if opts["test"] else None
    return inst, test


def _save_outputs(opts, clf, log):
    log.write(opts["out"])
    model_path = opts["model_out"] or opts["out"] + ".model"
    clf.save(model_path, {"seed": log.config.get("seed"), "config_hash": log.config_hash})
    final = {k: log.last(k) for k in ("objective", "train_acc", "test_acc")}
    _emit({"metrics": opts["out"], "model": model_path, "config_hash": log.config_hash, **final})


def _optim_fields(opts):
    return {k: opts[k] for k in ("epochs", "lr", "lr_decay_factor", "lr_decay_epochs",
                                 "momentum", "weight_decay", "hidden", "seed")}


def cmd_train(opts):
    inst, test = _load_instance(opts)
    mode = opts["mode"]
    supervised = mode == "supervised"
    sigma = opts["sigma"]
    if mode == "ideal":
        if not inst.has_gamma_true:
            raise DataError(f"{opts['bags']}: ideal mode needs gamma_true on every bag")
        if sigma is None:
            sizes = np.array([b.size for b in inst.bags], dtype=float)
            sigma = tuple(sizes @ np.stack([b.gamma_true for b in inst.bags]) / sizes.sum())
    cfg = TrainConfig(
        **_optim_fields(opts),
        batch_size=opts["batch_size"],
        regroup_every=opts["regroup_every"],
        mode="uniform" if supervised else mode,
        weights=opts["weights"],
        sigma=sigma,
        ideal_max_retries=opts["ideal_max_retries"],
    )
    run = train_supervised if supervised else train
    clf, log = run(inst, cfg, test=test, eval_train=opts["eval_train"])
    _save_outputs(opts, clf, log)
    return EXIT_OK


def cmd_baseline_kl(opts):
    inst, test = _load_instance(opts)
    cfg = KLBaselineConfig(**_optim_fields(opts), bags_per_minibatch=opts["bags_per_minibatch"])
    clf, log = train_kl(inst, cfg, test=test, eval_train=opts["eval_train"])
    _save_outputs(opts, clf, log)
    return EXIT_OK


def cmd_eval(opts):
    _require(opts, "dataset", "model")
    clf = Classifier.load(opts["model"])
    ds = read_dataset_csv(opts["dataset"], clf.n_classes)
    _emit({"accuracy": evaluate(clf, ds), "n": ds.n})
    return EXIT_OK


def cmd_verify(opts):
    if opts["trials"] < 1:
        raise ConfigError(f"trials must be at least 1, got {opts['trials']}")
    results = run_suite(opts["trials"], opts["seed"], opts["norm_perturbation"])
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.category}/{r.name}: "
              f"{r.violations} violations in {r.checked} (worst {r.worst:.3g})")
    failed = sorted({r.category for r in results if not r.passed})
    if opts["out"]:
        with open(opts["out"], "w") as fh:
            json.dump({"seed": opts["seed"], "trials": opts["trials"],
                       "checks": [r.to_dict() for r in results]}, fh, indent=2, sort_keys=True)
    if failed:
        print("failing categories: " + ", ".join(failed))
        return EXIT_VERIFY
    return EXIT_OK


COMMANDS = {
    "make-bags": cmd_make_bags,
    "train": cmd_train,
    "eval": cmd_eval,
    "verify": cmd_verify,
    "baseline-kl": cmd_baseline_kl,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        opts = resolve_options(args.command, args)
        return COMMANDS[args.command](opts)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AssumptionViolation as exc:
        where = f" (group {exc.group})" if exc.group is not None else ""
        print(f"assumption violation{where}: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except ConvergenceFailure as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
