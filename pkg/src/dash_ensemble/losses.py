"""Training losses and their gradients.

Logit-level functions return ``(value, dvalue/dlogits)``; the ensemble-level
wrappers backpropagate those into one member's flat parameter gradient while
every other member is held fixed.

Conventions:

* label smoothing puts ``1 - alpha + alpha/M`` on the true class and
  ``alpha/M`` elsewhere;
* the diversity term is ``KL(member i || member j)`` on temperature-scaled
  softmaxes of the non-target logits, summed over ``j != i`` and divided by
  the batch size only.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .model import backward, forward
from .tensor import log_softmax


@dataclass
class LossValue:
    value: float
    grad: np.ndarray = None


def _check_labels(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise IndexError(f"labels must lie in [0, {n_classes}), got range [{labels.min()}, {labels.max()}]")
    return labels


def smoothed_targets(labels, n_classes, alpha):
    if not 0.0 <= alpha < 1.0:
        raise ParameterError(f"label smoothing alpha must be in [0, 1), got {alpha}")
    labels = _check_labels(labels, n_classes)
    q = np.full((labels.shape[0], n_classes), alpha / n_classes)
    q[np.arange(labels.shape[0]), labels] += 1.0 - alpha
    return q


def smoothed_ce(logits, labels, alpha=0.0):
    b, M = logits.shape
    q = smoothed_targets(labels, M, alpha)
    logp = log_softmax(logits)
    value = -float(np.sum(q * logp)) / b
    return value, (np.exp(logp) - q) / b


def _mixture_logprob(logits_list):
    logps = np.stack([log_softmax(z) for z in logits_list])
    top = logps.max(axis=0)
    log_mix = top + np.log(np.exp(logps - top).sum(axis=0)) - np.log(len(logits_list))
    return logps, log_mix


def mixture_ce_all(logits_list, labels, alpha=0.0):
    """Smoothed CE of the averaged-softmax prediction and its gradient w.r.t. every member's logits."""
    b, M = logits_list[0].shape
    m = len(logits_list)
    q = smoothed_targets(labels, M, alpha)
    logps, log_mix = _mixture_logprob(logits_list)
    value = -float(np.sum(q * log_mix)) / b
    grads = []
    for logp in logps:
        # p_j / P, bounded by m, keeps the chain rule stable when P underflows
        ratio = np.exp(logp - log_mix)
        qr = q * ratio
        grads.append((np.exp(logp) * qr.sum(axis=1, keepdims=True) - qr) / (m * b))
    return value, grads


def mixture_ce(logits_list, labels, alpha, i):
    value, grads = mixture_ce_all(logits_list, labels, alpha)
    return value, grads[i]


def nontarget_logits(logits, labels):
    b, M = logits.shape
    keep = np.ones((b, M), dtype=bool)
    keep[np.arange(b), labels] = False
    return logits[keep].reshape(b, M - 1), keep


def nontarget_kl(logits_list, labels, tau, i):
    """Diversity loss of member ``i`` and its gradient w.r.t. member ``i``'s logits."""
    b, M = logits_list[0].shape
    if M < 2:
        raise ParameterError("diversity loss needs at least 2 classes (non-target vector would be empty)")
    if not tau > 0:
        raise ParameterError(f"temperature tau must be positive, got {tau}")
    labels = _check_labels(labels, M)
    logs = []
    for z in logits_list:
        u, keep = nontarget_logits(z, labels)
        logs.append(log_softmax(u, tau))
    s_i = np.exp(logs[i])
    v = np.zeros_like(s_i)
    for j, ls in enumerate(logs):
        if j != i:
            v += logs[i] - ls
    value = float(np.sum(s_i * v)) / b
    du = s_i * (v - np.sum(s_i * v, axis=1, keepdims=True)) / (tau * b)
    dz = np.zeros((b, M))
    dz[keep] = du.ravel()
    return value, dz


def tilde_terms(logits_list, labels, i, gamma, alpha):
    """Member CE plus ``gamma`` times the mixture CE, at the logit level."""
    value, dz = smoothed_ce(logits_list[i], labels, alpha)
    if gamma != 0.0:
        ens_value, ens_dz = mixture_ce(logits_list, labels, alpha, i)
        value += gamma * ens_value
        dz = dz + gamma * ens_dz
    return value, dz


# ---------------------------------------------------------------- ensemble level

def _logits_with(ens, batch, i, params=None, logits=None):
    z_i, cache = forward(ens.members[i], batch.inputs, params)
    zs = list(logits) if logits is not None else [m.logits(batch.inputs) for m in ens.members]
    zs[i] = z_i
    return zs, cache


def ce_label_smoothing(logits, labels, alpha=0.1):
    value, dz = smoothed_ce(np.asarray(logits, dtype=np.float64), labels, alpha)
    return LossValue(value, dz)


def member_loss(ens, batch, i, alpha=0.1, params=None):
    z, cache = forward(ens.members[i], batch.inputs, params)
    value, dz = smoothed_ce(z, batch.labels, alpha)
    return LossValue(value, backward(ens.members[i], cache, dz))


def ensemble_loss(ens, batch, i, alpha=0.1, params=None):
    """Mixture CE differentiated w.r.t. member ``i`` only."""
    zs, cache = _logits_with(ens, batch, i, params)
    value, dz = mixture_ce(zs, batch.labels, alpha, i)
    return LossValue(value, backward(ens.members[i], cache, dz))


def diversity_loss(ens, batch, tau, i, params=None):
    zs, cache = _logits_with(ens, batch, i, params)
    value, dz = nontarget_kl(zs, batch.labels, tau, i)
    return LossValue(value, backward(ens.members[i], cache, dz))


def tilde_loss(ens, batch, i, gamma=0.1, alpha=0.1, params=None):
    zs, cache = _logits_with(ens, batch, i, params)
    value, dz = tilde_terms(zs, batch.labels, i, gamma, alpha)
    return LossValue(value, backward(ens.members[i], cache, dz))


def combined_loss(ens, batch, gamma, gamma_c, tau, i, alpha=0.1, params=None):
    if gamma < 0 or gamma_c < 0:
        raise ParameterError(f"gamma and gamma_c must be nonnegative, got {gamma}, {gamma_c}")
    zs, cache = _logits_with(ens, batch, i, params)
    value, dz = tilde_terms(zs, batch.labels, i, gamma, alpha)
    if gamma_c != 0.0:
        div_value, div_dz = nontarget_kl(zs, batch.labels, tau, i)
        value += gamma_c * div_value
        dz = dz + gamma_c * div_dz
    return LossValue(value, backward(ens.members[i], cache, dz))
