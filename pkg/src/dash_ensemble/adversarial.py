"""L-infinity PGD against the averaged-softmax ensemble, and robust-accuracy curves.

The attacked objective is the plain (unsmoothed) cross-entropy of the
ensemble mixture.  By default each sample keeps the highest-loss iterate seen
(starting from the clean point), so an attack never lowers the loss.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParameterError
from .model import Batch, input_gradient
from .tensor import Rng, log_softmax


@dataclass
class AttackConfig:
    epsilon: float
    step_size: float
    steps: int = 10
    random_start: bool = False
    keep_best: bool = True

    def __post_init__(self):
        if self.epsilon < 0:
            raise ParameterError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not self.step_size > 0:
            raise ParameterError(f"step_size must be positive, got {self.step_size}")
        if self.epsilon > 0 and self.step_size > 2 * self.epsilon:
            raise ParameterError(f"step_size {self.step_size} exceeds 2*epsilon = {2 * self.epsilon}")
        if int(self.steps) < 1:
            raise ParameterError(f"steps must be >= 1, got {self.steps}")


def project_linf(x_adv, x, epsilon, lo=None, hi=None):
    """Clip ``x_adv`` into the epsilon box around ``x`` (and the domain box, if given).

    After clipping, any coordinate whose difference from ``x`` still rounds
    outside ``[-epsilon, epsilon]`` is stepped toward ``x`` one ulp at a time,
    so the constraint holds exactly in floating point.
    """
    out = np.clip(x_adv, x - epsilon, x + epsilon)
    if lo is not None or hi is not None:
        out = np.clip(out, lo, hi)
    for _ in range(8):
        bad = np.abs(out - x) > epsilon
        if not bad.any():
            break
        out[bad] = np.nextafter(out[bad], x[bad])
    return out


def per_sample_ce(ens, inputs, labels):
    logps = np.stack([log_softmax(z) for z in ens.all_logits(inputs)])
    top = logps.max(axis=0)
    log_mix = top + np.log(np.exp(logps - top).sum(axis=0)) - np.log(len(ens))
    return -log_mix[np.arange(labels.shape[0]), labels]


def pgd_attack(ens, batch, config, rng=None, lo=None, hi=None, indices=None):
    """Adversarial inputs within ``|x_adv - x|_inf <= epsilon``.

    Random starts draw each sample's offset from its own stream
    ``rng.child(index)`` so results do not depend on batch composition.
    """
    x = batch.inputs
    y = batch.labels
    eps = float(config.epsilon)
    if eps == 0.0:
        return x.copy()
    cur = x.copy()
    if config.random_start:
        rng = rng if rng is not None else Rng(0)
        idx = np.arange(len(batch)) if indices is None else np.asarray(indices)
        noise = np.stack([rng.child(int(k)).uniform(-eps, eps, x.shape[1]) for k in idx])
        cur = project_linf(x + noise, x, eps, lo, hi)
    best = x.copy()
    best_loss = per_sample_ce(ens, x, y)
    if config.keep_best and config.random_start:
        loss = per_sample_ce(ens, cur, y)
        better = loss > best_loss
        best[better], best_loss[better] = cur[better], loss[better]
    for _ in range(int(config.steps)):
        g = input_gradient(ens, Batch(cur, y), reduction="sum")
        if not np.all(np.isfinite(g)):
            bad = int(np.argwhere(~np.isfinite(g))[0][0])
            raise NumericError(f"non-finite input gradient for sample {bad}")
        cur = project_linf(cur + config.step_size * np.sign(g), x, eps, lo, hi)
        if config.keep_best:
            loss = per_sample_ce(ens, cur, y)
            better = loss > best_loss
            best[better], best_loss[better] = cur[better], loss[better]
    return best if config.keep_best else cur


def robust_accuracy_curve(ens, dataset, epsilons, base_config, rng=None, lo=None, hi=None):
    """``[(epsilon, accuracy), ...]`` with the step size capped at ``2*epsilon``."""
    epsilons = [float(e) for e in epsilons]
    if any(b < a for a, b in zip(epsilons, epsilons[1:])):
        raise ParameterError(f"epsilons must be sorted ascending, got {epsilons}")
    batch = dataset.batch()
    rows = []
    for eps in epsilons:
        if eps == 0.0:
            x_adv = batch.inputs
        else:
            cfg = AttackConfig(eps, min(base_config.step_size, 2 * eps), base_config.steps,
                               base_config.random_start, base_config.keep_best)
            x_adv = pgd_attack(ens, batch, cfg, rng, lo, hi)
        acc = float(np.mean(ens.predict(x_adv).argmax(axis=1) == batch.labels))
        rows.append((eps, acc))
    return rows


def curve_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epsilon", "accuracy"])
    for eps, acc in rows:
        w.writerow([repr(eps), repr(acc)])
    return buf.getvalue()
