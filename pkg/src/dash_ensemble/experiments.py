"""Multi-seed experiment runners behind the CLI: gamma sweep, flatness ablation, attack curves.

Every runner takes datasets and a :class:`TrainConfig`, trains one ensemble
per (setting, seed) with ``config.seed`` replaced by the seed, and returns
plain row dicts.  Rows carry a ``seed`` field; :func:`with_means` appends
rows whose ``seed`` is ``"mean"``.
"""

import csv
import io

import numpy as np

from .adversarial import robust_accuracy_curve
from .data import gen_spirals
from .errors import ConfigError
from .metrics import evaluate_ensemble
from .optimizer import build_ensemble, train

DEFAULT_GAMMAS = (0.1, 0.2, 0.5, 0.8, 1.0)
GAMMA_FIELDS = ("gamma", "accuracy", "nll", "brier", "ece")
ABLATION_METRICS = ("accuracy", "ld", "d", "avg_accuracy")
ABLATION_FIELDS = ("variant", "seed", "rho1", "rho2", "gamma_c", "congruence") + ABLATION_METRICS
VARIANTS = ("sgd", "dash_f", "dash")

# Spirals benchmark used by the ablation study: 4 arms so that the
# non-target probability vectors have 3 entries (room for 3 members in the
# log-determinant), a fixed data seed, and a test set twice the train size.
BENCHMARK = dict(n_train=1000, n_test=2000, turns=0.75, noise_sd=0.05, classes=4, data_seed=100)
# Training settings for the experiment commands when no --config is given.
BENCHMARK_TRAINING = dict(epochs=50, members=3, hidden=[64, 64], batch_size=32, eta=0.05, rho1=0.05)


def spirals_benchmark(**over):
    params = dict(BENCHMARK, **over)
    mk = lambda n, s: gen_spirals(n, params["turns"], params["noise_sd"], params["classes"], s)  # noqa: E731
    return mk(params["n_train"], params["data_seed"]), mk(params["n_test"], params["data_seed"] + 100)


def fit(train_ds, config, test=None, track_congruence=False):
    ens = build_ensemble(config, train_ds.dim, train_ds.n_classes)
    return train(ens, train_ds, config, test=test, track_congruence=track_congruence)


def with_means(rows, key_fields, value_fields):
    """Append one ``seed="mean"`` row per distinct ``key_fields`` combination."""
    groups = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in key_fields), []).append(row)
    out = list(rows)
    for key, members in groups.items():
        mean = dict(members[0])
        mean["seed"] = "mean"
        for f in value_fields:
            mean[f] = float(np.mean([r[f] for r in members]))
        out.append(mean)
    return out


def rows_to_csv(rows, fields):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in (row[f] for f in fields)])
    return buf.getvalue()


# -------------------------------------------------------------- gamma sweep

def gamma_sweep(train_ds, test_ds, config, seeds=(0,), gammas=DEFAULT_GAMMAS):
    """Per-seed rows of ``(gamma, accuracy, nll, brier, ece)`` on ``test_ds``."""
    rows = []
    for g in gammas:
        for seed in seeds:
            cfg = config.replace(gamma=float(g), seed=int(seed))
            _, ens = fit(train_ds, cfg)
            rep = evaluate_ensemble(ens, test_ds.inputs, test_ds.labels)
            rows.append(dict(seed=int(seed), gamma=float(g), accuracy=rep.accuracy, nll=rep.nll,
                             brier=rep.brier, ece=rep.ece))
    return rows


def gamma_table(rows):
    """Seed-averaged rows, one per gamma in first-seen order."""
    return [r for r in with_means(rows, ("gamma",), GAMMA_FIELDS[1:]) if r["seed"] == "mean"]


def best_gamma(table):
    return max(table, key=lambda r: (r["accuracy"], -r["gamma"]))["gamma"]


# ----------------------------------------------------------------- ablation

def variant_config(config, name):
    """SGD, DASH with flat seeking only (``rho2 = 0``, ``gamma_c = 0``), or full DASH."""
    if not config.optimizer.startswith("dash"):
        raise ConfigError("optimizer", f"ablation needs a dash optimizer as its base, got {config.optimizer!r}")
    if name == "sgd":
        return config.replace(optimizer="sgd")
    if name == "dash_f":
        return config.replace(rho2=0.0, gamma_c_mode=0.0)
    if name == "dash":
        return config
    raise ConfigError("variant", f"unknown ablation variant {name!r}")


def _echo(cfg):
    if cfg.optimizer == "sgd":
        return 0.0, 0.0, 0.0
    gc = cfg.gamma_c_mode
    return float(cfg.rho1), float(cfg.rho2), gc if isinstance(gc, str) else float(gc)


def ablation(train_ds, test_ds, config, seeds=(0,), variants=VARIANTS):
    """Per-seed rows for each variant: accuracy, LD, disagreement, average member accuracy.

    ``congruence`` is the mean training-time cosine between the descent
    direction of the coupled loss and the diversity gradient.
    """
    rows = []
    for seed in seeds:
        for name in variants:
            cfg = variant_config(config, name).replace(seed=int(seed))
            report, ens = fit(train_ds, cfg, track_congruence=True)
            rep = evaluate_ensemble(ens, test_ds.inputs, test_ds.labels)
            rho1, rho2, gc = _echo(cfg)
            rows.append(dict(variant=name, seed=int(seed), rho1=rho1, rho2=rho2, gamma_c=gc,
                             congruence=report.mean_congruence, accuracy=rep.accuracy, ld=rep.log_det,
                             d=rep.disagreement, avg_accuracy=rep.avg_member_accuracy))
    return rows


def ablation_summary(rows):
    """Seeds on which each directional claim holds, keyed by claim name."""
    by = {}
    for r in rows:
        if r["seed"] != "mean":
            by.setdefault(r["seed"], {})[r["variant"]] = r
    seeds = sorted(by)
    count = lambda f: sum(bool(f(by[s])) for s in seeds)  # noqa: E731
    return {
        "n_seeds": len(seeds),
        "acc_dash_ge_dash_f": count(lambda v: v["dash"]["accuracy"] >= v["dash_f"]["accuracy"]),
        "acc_dash_f_ge_sgd": count(lambda v: v["dash_f"]["accuracy"] >= v["sgd"]["accuracy"]),
        "ld_dash_gt_dash_f": count(lambda v: v["dash"]["ld"] > v["dash_f"]["ld"]),
        "congruence_dash_gt_dash_f": count(lambda v: v["dash"]["congruence"] > v["dash_f"]["congruence"]),
    }


# ------------------------------------------------------------------- attack

def attack_curves(ens_by_name, test_ds, epsilons, attack_config, rng=None, lo=None, hi=None):
    """``{name: [(epsilon, accuracy), ...]}`` for several trained ensembles."""
    return {name: robust_accuracy_curve(ens, test_ds, epsilons, attack_config, rng, lo, hi)
            for name, ens in ens_by_name.items()}
