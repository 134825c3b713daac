"""Accuracy, likelihood, calibration and diversity metrics for ensembles.

Definitions pinned here (the report header repeats the Cal-AAC one):

* ECE uses ``n_bins`` equal-width bins on the max probability; a sample with
  confidence ``c`` falls in bin ``min(floor(c * n_bins), n_bins - 1)``.
* Cal-AAC sorts samples by descending confidence (ties keep input order) and
  averages, over rejection fractions ``r = 0, 1/n, ..., (n-1)/n``, the error
  rate of the ``n - r*n`` most confident samples.
* LD builds, per sample, the ``m x (M-1)`` matrix of L2-normalized
  non-target probability vectors and averages ``log det(N N^T + eps I)``.
"""

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ParameterError
from .tensor import softmax

PROB_FLOOR = 1e-12
LD_JITTER = 1e-12
AAC_DEFINITION = "cal_aac: mean over rejection fractions r=0,1/n,...,(n-1)/n of the error rate among the (1-r)n most confident samples"


def _labels(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise IndexError(f"labels must lie in [0, {n_classes})")
    return labels


def accuracy(probs, labels):
    probs = np.asarray(probs, dtype=np.float64)
    labels = _labels(labels, probs.shape[1])
    return float(np.mean(probs.argmax(axis=1) == labels))


def nll(probs, labels):
    probs = np.asarray(probs, dtype=np.float64)
    labels = _labels(labels, probs.shape[1])
    p = probs[np.arange(labels.shape[0]), labels]
    return float(np.mean(-np.log(np.maximum(p, PROB_FLOOR))))


def brier(probs, labels):
    probs = np.asarray(probs, dtype=np.float64)
    labels = _labels(labels, probs.shape[1])
    diff = probs.copy()
    diff[np.arange(labels.shape[0]), labels] -= 1.0
    return float(np.mean(np.sum(diff * diff, axis=1)))


def ece(probs, labels, n_bins=15):
    if n_bins < 1:
        raise ParameterError(f"n_bins must be >= 1, got {n_bins}")
    probs = np.asarray(probs, dtype=np.float64)
    labels = _labels(labels, probs.shape[1])
    conf = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(np.float64)
    idx = np.minimum((conf * n_bins).astype(np.int64), n_bins - 1)
    n = labels.shape[0]
    total = 0.0
    for b in range(n_bins):
        sel = idx == b
        cnt = int(sel.sum())
        if cnt:
            total += cnt / n * abs(correct[sel].mean() - conf[sel].mean())
    return float(total)


def reliability_table(probs, labels, n_bins=15):
    """Per-bin ``(lower, upper, count, accuracy, confidence)`` rows."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = _labels(labels, probs.shape[1])
    conf = probs.max(axis=1)
    correct = probs.argmax(axis=1) == labels
    idx = np.minimum((conf * n_bins).astype(np.int64), n_bins - 1)
    rows = []
    for b in range(n_bins):
        sel = idx == b
        cnt = int(sel.sum())
        rows.append((b / n_bins, (b + 1) / n_bins, cnt,
                     float(correct[sel].mean()) if cnt else 0.0,
                     float(conf[sel].mean()) if cnt else 0.0))
    return rows


def cal_aac(probs, labels):
    probs = np.asarray(probs, dtype=np.float64)
    labels = _labels(labels, probs.shape[1])
    conf = probs.max(axis=1)
    wrong = (probs.argmax(axis=1) != labels).astype(np.float64)
    order = np.argsort(-conf, kind="stable")
    cum_err = np.cumsum(wrong[order])
    kept = np.arange(1, labels.shape[0] + 1)
    return float(np.mean(cum_err / kept))


def disagreement(member_predictions):
    preds = [np.asarray(p).ravel() for p in member_predictions]
    if len(preds) < 2:
        raise ParameterError("disagreement needs at least 2 members")
    fracs = [float(np.mean(a != b)) for a, b in combinations(preds, 2)]
    return float(np.mean(fracs))


def log_det_diversity(member_probs, labels, jitter=LD_JITTER):
    member_probs = np.asarray(member_probs, dtype=np.float64)
    m, n, M = member_probs.shape
    labels = _labels(labels, M)
    if m > M - 1:
        warnings.warn(f"log-det diversity with m={m} members and only {M - 1} non-target classes: "
                      "the Gram matrix is singular and LD is jitter-dominated", stacklevel=2)
    keep = np.ones((n, M), dtype=bool)
    keep[np.arange(n), labels] = False
    nt = member_probs[:, keep].reshape(m, n, M - 1).transpose(1, 0, 2)
    norms = np.linalg.norm(nt, axis=2, keepdims=True)
    nt = nt / np.maximum(norms, np.finfo(float).tiny)
    # log det(V V^T + jitter I) = sum log(s^2 + jitter) over the singular values
    # of V, padded with zeros when m > M-1.  This avoids forming the Gram
    # matrix, whose condition number is the square of V's.
    sv = np.linalg.svd(nt, compute_uv=False)
    logdet = np.log(sv * sv + jitter).sum(axis=1) + (m - sv.shape[1]) * math.log(jitter)
    return float(np.mean(logdet))


# ------------------------------------------------------------- temperature

def _mixture_nll(member_logits, labels, temperature):
    probs = np.mean([softmax(z, temperature) for z in member_logits], axis=0)
    return nll(probs, labels)


def _power_nll(probs, labels, temperature):
    return nll(power_scale(probs, temperature), labels)


def power_scale(probs, temperature):
    logp = np.log(np.maximum(probs, PROB_FLOOR)) / temperature
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    return p / p.sum(axis=1, keepdims=True)


def golden_section_min(f, lo, hi, tol=1e-4):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    return x, f(x)


def temperature_scale(source, labels, level="member", bounds=(0.05, 20.0), tol=1e-4):
    """Temperature minimizing NLL on ``(source, labels)``.

    ``level="member"``: ``source`` is a sequence of member logit arrays and
    ``T`` divides every member's logits before softmax averaging.
    ``level="mixture"``: ``source`` is a probability array and ``T`` acts as
    ``p ** (1/T)`` renormalized.  Golden-section search runs on ``log T``;
    if the optimum is not at least as good as ``T = 1`` then 1 is returned.
    """
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if level == "member":
        source = [np.asarray(z, dtype=np.float64) for z in source]
        f = lambda t: _mixture_nll(source, labels, t)  # noqa: E731
    elif level == "mixture":
        source = np.asarray(source, dtype=np.float64)
        f = lambda t: _power_nll(source, labels, t)  # noqa: E731
    else:
        raise ParameterError(f"calibration level must be 'member' or 'mixture', got {level!r}")
    if np.unique(labels).size < 2:
        warnings.warn("validation labels contain a single class; using temperature 1", stacklevel=2)
        return 1.0
    log_t, best = golden_section_min(lambda s: f(math.exp(s)), math.log(bounds[0]), math.log(bounds[1]), tol)
    if best <= f(1.0):
        return math.exp(log_t)
    return 1.0


# ------------------------------------------------------------------ report

REPORT_FIELDS = (
    "accuracy", "nll", "brier", "ece", "cal_nll", "cal_brier", "cal_aac",
    "disagreement", "log_det", "avg_member_accuracy", "optimal_temperature", "n_eval",
)


@dataclass
class MetricsReport:
    accuracy: float
    nll: float
    brier: float
    ece: float
    cal_nll: float
    cal_brier: float
    cal_aac: float
    disagreement: float
    log_det: float
    avg_member_accuracy: float
    optimal_temperature: float
    n_eval: int

    def to_dict(self):
        return {k: getattr(self, k) for k in REPORT_FIELDS}

    def to_json(self):
        doc = {"definitions": {"cal_aac": AAC_DEFINITION}, "metrics": self.to_dict()}
        return json.dumps(doc, indent=2) + "\n"

    def to_csv(self, header=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(REPORT_FIELDS)
        w.writerow([self.n_eval if k == "n_eval" else repr(float(getattr(self, k))) for k in REPORT_FIELDS])
        return buf.getvalue()


def evaluate_ensemble(ens, inputs, labels, val_inputs=None, val_labels=None, n_bins=15, cal_level="member"):
    """Full metric suite; the temperature is fit on the validation data when given."""
    labels = np.asarray(labels, dtype=np.int64)
    logits = ens.all_logits(inputs)
    return evaluate_logits(logits, labels,
                           None if val_inputs is None else ens.all_logits(val_inputs),
                           val_labels, n_bins, cal_level)


def evaluate_logits(member_logits, labels, val_logits=None, val_labels=None, n_bins=15, cal_level="member"):
    member_probs = np.stack([softmax(z) for z in member_logits])
    probs = member_probs.mean(axis=0)
    if val_logits is None:
        t = 1.0
    elif cal_level == "member":
        t = temperature_scale(val_logits, val_labels, "member")
    else:
        val_probs = np.mean([softmax(z) for z in val_logits], axis=0)
        t = temperature_scale(val_probs, val_labels, "mixture")
    if cal_level == "member":
        cal_probs = np.mean([softmax(z, t) for z in member_logits], axis=0)
    else:
        cal_probs = power_scale(probs, t)
    preds = [p.argmax(axis=1) for p in member_probs]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ld = log_det_diversity(member_probs, labels)
    return MetricsReport(
        accuracy=accuracy(probs, labels),
        nll=nll(probs, labels),
        brier=brier(probs, labels),
        ece=ece(probs, labels, n_bins),
        cal_nll=nll(cal_probs, labels),
        cal_brier=brier(cal_probs, labels),
        cal_aac=cal_aac(cal_probs, labels),
        disagreement=disagreement(preds),
        log_det=ld,
        avg_member_accuracy=float(np.mean([np.mean(p == labels) for p in preds])),
        optimal_temperature=float(t),
        n_eval=int(labels.shape[0]),
    )
