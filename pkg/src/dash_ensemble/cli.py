"""Command-line entry point: ``dash-ensemble <command> [flags]``.

Exit codes::

    0  success
    2  usage or configuration error (bad flag, invalid config field, missing input path)
    3  data or schema error (malformed dataset, checkpoint/data mismatch)
    4  numeric abort (NaN/Inf during training or attack)

Every command writes its outputs plus a ``manifest.json`` listing them with
their hashes.  Apart from the ``timings`` entry of the manifest, outputs are
byte-identical across re-runs with the same flags.
"""

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .adversarial import AttackConfig, curve_to_csv
from .bound import BoundInputs, evaluate_bound, measure_sharp_losses
from .data import format_delimited, gen_spirals, gen_two_moons, load_delimited
from .errors import DataError, NumericError, ParameterError, SchemaError, ShapeError
from .experiments import (
    ABLATION_FIELDS, ABLATION_METRICS, BENCHMARK_TRAINING, DEFAULT_GAMMAS, GAMMA_FIELDS, ablation,
    ablation_summary, attack_curves, best_gamma, fit, gamma_sweep, gamma_table, rows_to_csv, spirals_benchmark,
    with_means,
)
from .metrics import evaluate_ensemble
from .model import Ensemble
from .optimizer import OPTIMIZERS, TrainConfig
from .tensor import Rng

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
EXIT_CODES = {EXIT_OK: "success", EXIT_USAGE: "usage/config", EXIT_DATA: "data/schema", EXIT_NUMERIC: "numeric abort"}
SCHEMAS = {"manifest": 1, "dataset_csv": 1, "checkpoint": 1, "train_report": 1, "metrics": 1,
           "gamma_sweep": 1, "ablation": 1, "bound": 1, "attack_curve": 1}


class UsageError(Exception):
    pass


# -------------------------------------------------------------- utilities

def git_blob_hash(data):
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def file_hash(path):
    with open(path, "rb") as fh:
        return git_blob_hash(fh.read())


def parse_seeds(text):
    """``"3"``, ``"0..4"`` (inclusive) or ``"0,2,5"``."""
    try:
        if ".." in text:
            a, b = text.split("..")
            seeds = list(range(int(a), int(b) + 1))
        else:
            seeds = [int(s) for s in text.split(",")]
    except ValueError:
        raise UsageError(f"--seeds: cannot parse {text!r}; use N, A..B or A,B,C") from None
    if not seeds or min(seeds) < 0:
        raise UsageError(f"--seeds: need nonnegative seeds, got {text!r}")
    return seeds


def parse_floats(text, flag):
    try:
        return [float(s) for s in text.split(",")]
    except ValueError:
        raise UsageError(f"{flag}: cannot parse {text!r} as comma-separated numbers") from None


def need_file(path, flag):
    if path is None:
        raise UsageError(f"{flag} is required")
    if not os.path.isfile(path):
        raise UsageError(f"{flag}: no such file: {path}")
    return path


class Run:
    """Collects artifacts and writes them together with the manifest."""

    def __init__(self, args, command):
        self.args = args
        self.command = command
        self.out = args.out or "."
        self.inputs = {}
        self.artifacts = []
        self.config = None
        self.extra = {}
        self.started = time.perf_counter()

    def input(self, path):
        self.inputs[os.path.basename(path)] = file_hash(path)
        return path

    def write(self, name, text, directory=None):
        directory = self.out if directory is None else directory
        if directory:
            os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        self.artifacts.append({"path": name, "hash": git_blob_hash(text.encode())})
        return path

    def say(self, msg):
        if not self.args.quiet:
            print(msg)

    def finish(self, manifest_path=None):
        flags = {k: v for k, v in sorted(vars(self.args).items()) if k not in ("func", "quiet")}
        doc = {
            "tool": "dash-ensemble",
            "version": __version__,
            "command": self.command,
            "flags": flags,
            "config": self.config,
            "inputs": self.inputs,
        }
        hashed = dict(doc, flags={k: v for k, v in flags.items() if k != "out"})
        doc["input_hash"] = git_blob_hash(json.dumps(hashed, sort_keys=True).encode())
        doc.update(self.extra)
        doc["artifacts"] = self.artifacts
        doc["schemas"] = SCHEMAS
        doc["timings"] = {"wall_seconds": round(time.perf_counter() - self.started, 3)}
        path = manifest_path or os.path.join(self.out, "manifest.json")
        with open(path, "w") as fh:
            fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return 0


def load_config(args, base=None):
    if args.config is not None:
        cfg = TrainConfig.from_json(need_file(args.config, "--config"))
    else:
        cfg = base or TrainConfig()
    over = {}
    for name in ("optimizer", "epochs", "rho1", "rho2", "gamma"):
        val = getattr(args, name, None)
        if val is not None:
            over[name] = val
    if over.get("optimizer") == "asam" and "rho1" not in over and args.config is None:
        over["rho1"], over["rho2"] = 2.0, 2.0
    return cfg.replace(**over) if over else cfg


def single_seed(args, cfg):
    if args.seeds is None:
        return cfg
    seeds = parse_seeds(args.seeds)
    if len(seeds) != 1:
        raise UsageError(f"{args.command} takes a single seed, got {args.seeds!r}")
    return cfg.replace(seed=seeds[0])


def load_checkpoint(path):
    with open(need_file(path, "--checkpoint")) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "members" not in doc:
        raise SchemaError(f"{path}: missing 'members'")
    return Ensemble.from_dict(doc)


def check_dims(ens, ds, path):
    if ds.dim != ens.input_dim:
        raise SchemaError(f"{path} has {ds.dim} features but the checkpoint expects {ens.input_dim}")
    if ds.labels.max() >= ens.n_classes:
        raise SchemaError(f"{path} has labels up to {ds.labels.max()} but the checkpoint has {ens.n_classes} classes")


def experiment_data(args, run):
    if args.data is None:
        if args.test is not None:
            raise UsageError("--test needs --data")
        train_ds, test_ds = spirals_benchmark()
        run.extra["data"] = "spirals benchmark"
        return train_ds, test_ds
    train_ds = load_delimited(run.input(need_file(args.data, "--data")))
    test_ds = load_delimited(run.input(need_file(args.test, "--test")), label_names=train_ds.label_names)
    return train_ds, test_ds


# --------------------------------------------------------------- commands

def cmd_generate(args):
    if args.out is None:
        raise UsageError("--out FILE is required")
    run = Run(args, "generate")
    if args.kind == "two-moons":
        ds = gen_two_moons(args.n, args.noise, args.seed)
    else:
        ds = gen_spirals(args.n, args.turns, args.noise, args.classes, args.seed)
    directory, name = os.path.split(args.out)
    run.write(name, format_delimited(ds), directory)
    run.say(f"wrote {len(ds)} rows to {args.out}")
    return run.finish(args.out + ".manifest.json")


def cmd_train(args):
    run = Run(args, "train")
    data_path = need_file(args.data, "--data")
    cfg = single_seed(args, load_config(args))
    run.config = cfg.to_dict()
    ds = load_delimited(run.input(data_path))
    test = None
    if args.test is not None:
        test = load_delimited(run.input(need_file(args.test, "--test")), label_names=ds.label_names)
    report, ens = fit(ds, cfg, test=test, track_congruence=not args.no_congruence)
    run.write("checkpoint.json", json.dumps(ens.to_dict(cfg.to_dict())) + "\n")
    run.write("train_report.csv", report.to_csv())
    last = report.rows[-1]
    run.say(f"epoch {last['epoch']}: train acc {last['ens_train_acc']:.4f}"
            + (f", test acc {last['ens_test_acc']:.4f}" if test is not None else ""))
    return run.finish()


def cmd_evaluate(args):
    run = Run(args, "evaluate")
    ens = load_checkpoint(args.checkpoint)
    run.input(args.checkpoint)
    data_path = need_file(args.data, "--data")
    ds = load_delimited(run.input(data_path))
    check_dims(ens, ds, data_path)
    val = None
    if args.val is not None:
        val = load_delimited(run.input(need_file(args.val, "--val")), label_names=ds.label_names)
        check_dims(ens, val, args.val)
    rep = evaluate_ensemble(ens, ds.inputs, ds.labels,
                            None if val is None else val.inputs, None if val is None else val.labels,
                            n_bins=args.bins, cal_level=args.cal_level)
    run.write("metrics.json", rep.to_json())
    run.write("metrics.csv", rep.to_csv())
    run.say(f"accuracy {rep.accuracy:.4f}  nll {rep.nll:.4f}  ece {rep.ece:.4f}  T* {rep.optimal_temperature:.4f}")
    return run.finish()


def cmd_gamma_sweep(args):
    run = Run(args, "gamma-sweep")
    cfg = load_config(args, TrainConfig(**BENCHMARK_TRAINING))
    run.config = cfg.to_dict()
    train_ds, test_ds = experiment_data(args, run)
    seeds = parse_seeds(args.seeds or "0")
    gammas = parse_floats(args.gammas, "--gammas") if args.gammas else DEFAULT_GAMMAS
    rows = gamma_sweep(train_ds, test_ds, cfg, seeds, gammas)
    table = gamma_table(rows)
    run.write("gamma_sweep.csv", rows_to_csv(table, GAMMA_FIELDS))
    run.write("gamma_sweep_seeds.csv", rows_to_csv(rows, ("seed",) + GAMMA_FIELDS))
    run.extra["best_gamma"] = best_gamma(table)
    for r in table:
        run.say(f"gamma {r['gamma']:<4}  acc {r['accuracy']:.4f}  nll {r['nll']:.4f}  "
                f"brier {r['brier']:.4f}  ece {r['ece']:.4f}")
    run.say(f"best gamma by accuracy: {run.extra['best_gamma']}")
    return run.finish()


def cmd_ablation(args):
    run = Run(args, "ablation")
    cfg = load_config(args, TrainConfig(**BENCHMARK_TRAINING))
    run.config = cfg.to_dict()
    train_ds, test_ds = experiment_data(args, run)
    seeds = parse_seeds(args.seeds or "0")
    rows = ablation(train_ds, test_ds, cfg, seeds)
    rows = with_means(rows, ("variant",), ("congruence",) + ABLATION_METRICS)
    summary = ablation_summary(rows)
    run.write("ablation.csv", rows_to_csv(rows, ABLATION_FIELDS))
    run.write("ablation_summary.json", json.dumps(summary, indent=2) + "\n")
    for r in rows:
        if r["seed"] == "mean":
            run.say(f"{r['variant']:<7} acc {r['accuracy']:.4f}  ld {r['ld']:.3f}  d {r['d']:.4f}  "
                    f"avg acc {r['avg_accuracy']:.4f}  congruence {r['congruence']:.4f}")
    return run.finish()


def cmd_bound(args):
    run = Run(args, "bound")
    if args.inputs is not None:
        inp = BoundInputs.from_json(run.input(need_file(args.inputs, "--inputs")))
    else:
        ens = load_checkpoint(args.checkpoint)
        run.input(args.checkpoint)
        data_path = need_file(args.data, "--data")
        ds = load_delimited(run.input(data_path))
        check_dims(ens, ds, data_path)
        members, ens_loss = measure_sharp_losses(ens, ds.batch(), args.rho, args.samples, Rng(args.seed))
        sizes = {mem.n_params for mem in ens.members}
        inp = BoundInputs(m=len(ens), k=max(sizes), N=len(ds), rho=args.rho, delta=args.delta,
                          gamma=args.gamma if args.gamma is not None else 0.1, L=args.loss_bound,
                          member_norms=[float(np.linalg.norm(mem.params)) for mem in ens.members],
                          sharp_member_losses=members, sharp_ensemble_loss=ens_loss, C=args.C, O1=args.O1)
        run.write("bound_inputs.json", json.dumps(inp.to_dict(), indent=2) + "\n")
    out = evaluate_bound(inp)
    run.write("bound.json", out.to_json())
    run.write("bound.csv", out.to_csv())
    run.say(f"bound total {out.total:.6g} (prefactor {out.prefactor:.6g} x complexity {out.complexity:.6g})")
    return run.finish()


def cmd_attack(args):
    run = Run(args, "attack")
    if not args.checkpoint:
        raise UsageError("--checkpoint is required")
    data_path = need_file(args.data, "--data")
    ds = load_delimited(run.input(data_path))
    models = {}
    for item in args.checkpoint:
        name, _, path = item.rpartition("=")
        name = name or os.path.splitext(os.path.basename(path))[0]
        if name in models:
            raise UsageError(f"--checkpoint: duplicate name {name!r}; use NAME=PATH")
        models[name] = load_checkpoint(path)
        run.input(path)
        check_dims(models[name], ds, data_path)
    eps = parse_floats(args.epsilons, "--epsilons")
    cfg = AttackConfig(max(eps), args.step_size if args.step_size else max(eps) / 4 or 1.0,
                       args.steps, args.random_start)
    lo, hi = ds.bounds if args.clamp else (None, None)
    curves = attack_curves(models, ds, eps, cfg, Rng(args.seed), lo, hi)
    for name, rows in curves.items():
        run.write(f"attack_{name}.csv", curve_to_csv(rows))
        run.say(name + ": " + "  ".join(f"eps={e:g} acc={a:.4f}" for e, a in rows))
    return run.finish()


# ------------------------------------------------------------------ parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="training config JSON")
    common.add_argument("--out", help="output directory (a file path for generate)")
    common.add_argument("--seeds", help="seed range: N, A..B (inclusive) or A,B,C")
    common.add_argument("--quiet", action="store_true", help="no progress output")

    parser = argparse.ArgumentParser(prog="dash-ensemble", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        return p

    def train_overrides(p):
        p.add_argument("--optimizer", choices=OPTIMIZERS)
        p.add_argument("--epochs", type=int)
        p.add_argument("--rho1", type=float)
        p.add_argument("--rho2", type=float)

    p = add("generate", cmd_generate, "write a synthetic dataset")
    p.add_argument("--kind", choices=("two-moons", "spirals"), default="two-moons")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--turns", type=float, default=1.0)
    p.add_argument("--classes", type=int, default=2)

    p = add("train", cmd_train, "train an ensemble")
    p.add_argument("--data")
    p.add_argument("--test")
    p.add_argument("--gamma", type=float)
    p.add_argument("--no-congruence", action="store_true", help="skip the congruence diagnostic")
    train_overrides(p)

    p = add("evaluate", cmd_evaluate, "metric report for a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--val", help="validation data for temperature scaling")
    p.add_argument("--bins", type=int, default=15)
    p.add_argument("--cal-level", choices=("member", "mixture"), default="member")

    for name, func, text in (("gamma-sweep", cmd_gamma_sweep, "accuracy/NLL/Brier/ECE over gamma"),
                             ("ablation", cmd_ablation, "SGD vs flat-only DASH vs DASH")):
        p = add(name, func, text)
        p.add_argument("--data", help="training CSV (default: built-in spirals benchmark)")
        p.add_argument("--test")
        train_overrides(p)
        if name == "gamma-sweep":
            p.add_argument("--gammas", help="comma-separated gamma grid")
        else:
            p.add_argument("--gamma", type=float)

    p = add("bound", cmd_bound, "evaluate the PAC-Bayes sharpness bound")
    p.add_argument("--inputs", help="BoundInputs JSON")
    p.add_argument("--checkpoint", help="measure inputs from a checkpoint instead")
    p.add_argument("--data")
    p.add_argument("--rho", type=float, default=0.05)
    p.add_argument("--samples", type=int, default=32)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--gamma", type=float)
    p.add_argument("--loss-bound", type=float, default=1.0)
    p.add_argument("--C", type=float, default=4.0)
    p.add_argument("--O1", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)

    p = add("attack", cmd_attack, "PGD robust-accuracy curves")
    p.add_argument("--checkpoint", action="append", help="[NAME=]PATH, repeatable")
    p.add_argument("--data")
    p.add_argument("--epsilons", default="0")
    p.add_argument("--step-size", type=float)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--random-start", action="store_true")
    p.add_argument("--clamp", action="store_true", help="clamp to the data's feature bounds")
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ParameterError) as exc:
        code, msg = EXIT_USAGE, str(exc)
    except FileNotFoundError as exc:
        code, msg = EXIT_USAGE, f"no such file: {exc.filename}"
    except (DataError, SchemaError, ShapeError) as exc:
        code, msg = EXIT_DATA, str(exc)
    except NumericError as exc:
        code, msg = EXIT_NUMERIC, str(exc)
    print(f"dash-ensemble {args.command}: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
