"""SGD, SAM, ASAM and DASH update rules plus the ensemble training loop.

Every sharpness-aware kind follows the same two phases per member ``i`` and
mini-batch: an ascent step to a perturbed point ``theta_i^a``, then an SGD
step on ``theta_i`` using the gradient evaluated at ``theta_i^a``.  The
kinds differ only in the ascent:

``sgd``                 no ascent (``theta_i^a = theta_i``)
``sam``                 ``rho1`` along the normalized ensemble-coupled gradient
``asam``                ``rho1`` along ``|theta|^2 g / || |theta| g ||``
``dash_two_direction``  ``rho1`` along the coupled gradient plus ``rho2`` along
                        the normalized diversity gradient
``dash_combined``       ``rho1`` along the gradient of coupled + ``gamma_c`` * diversity

"Ensemble-coupled" is member CE plus ``gamma`` times the mixture CE.
"""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError, NumericError, ParameterError, ShapeError
from .losses import nontarget_kl, smoothed_ce, tilde_terms
from .model import Ensemble, backward, forward
from .tensor import EPS_GRAD, Rng, as_tensor, cosine, l2_norm, softmax

OPTIMIZERS = ("sgd", "sam", "asam", "dash_two_direction", "dash_combined")
GAMMA_C_CAP = 100.0


@dataclass
class TrainConfig:
    optimizer: str = "dash_two_direction"
    rho1: float = None
    rho2: float = None
    gamma: float = 0.1
    gamma_c_mode: object = "adaptive"
    tau: float = 0.5
    alpha: float = 0.1
    eta: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.005
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    update_order: str = "sequential"
    descent_loss: str = "tilde"
    members: int = 3
    hidden: list = field(default_factory=lambda: [32, 32])
    activation: str = "relu"

    def __post_init__(self):
        if self.rho1 is None:
            self.rho1 = 2.0 if self.optimizer == "asam" else 0.05
        if self.rho2 is None:
            self.rho2 = self.rho1
        self.validate()

    def validate(self):
        def need(name, ok, msg):
            if not ok:
                raise ConfigError(name, f"{msg}, got {getattr(self, name)!r}")

        need("optimizer", self.optimizer in OPTIMIZERS, f"must be one of {OPTIMIZERS}")
        for name in ("rho1", "rho2", "weight_decay"):
            need(name, _is_num(getattr(self, name)) and getattr(self, name) >= 0, "must be a nonnegative number")
        need("gamma", _is_num(self.gamma) and 0 <= self.gamma <= 1, "must lie in [0, 1]")
        gc = self.gamma_c_mode
        need("gamma_c_mode", gc == "adaptive" or (_is_num(gc) and gc >= 0),
             "must be 'adaptive' or a nonnegative number")
        need("tau", _is_num(self.tau) and self.tau > 0, "must be positive")
        need("alpha", _is_num(self.alpha) and 0 <= self.alpha < 1, "must lie in [0, 1)")
        need("eta", _is_num(self.eta) and self.eta > 0, "must be positive")
        need("momentum", _is_num(self.momentum) and 0 <= self.momentum < 1, "must lie in [0, 1)")
        for name in ("epochs", "batch_size"):
            need(name, _is_int(getattr(self, name)) and getattr(self, name) >= 1, "must be a positive integer")
        need("members", _is_int(self.members) and self.members >= 2, "must be an integer >= 2")
        need("seed", _is_int(self.seed) and 0 <= self.seed < 2**64, "must be a 64-bit unsigned integer")
        need("update_order", self.update_order in ("sequential", "snapshot"), "must be 'sequential' or 'snapshot'")
        need("descent_loss", self.descent_loss in ("tilde", "plain"), "must be 'tilde' or 'plain'")
        need("hidden", isinstance(self.hidden, (list, tuple)) and all(_is_int(h) and h >= 1 for h in self.hidden),
             "must be a list of positive integers")
        need("activation", self.activation in ("relu", "tanh"), "must be 'relu' or 'tanh'")

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in doc:
            if key not in known:
                raise ConfigError(key, "unknown field")
        doc = dict(doc)
        gc = doc.get("gamma_c_mode")
        if isinstance(gc, dict):
            if set(gc) != {"fixed"}:
                raise ConfigError("gamma_c_mode", "object form must be {\"fixed\": value}")
            doc["gamma_c_mode"] = gc["fixed"]
        if "hidden" in doc and isinstance(doc["hidden"], (list, tuple)):
            doc["hidden"] = list(doc["hidden"])
        return cls(**doc)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("<root>", f"invalid JSON: {exc}") from None
        return cls.from_dict(doc)

    def to_dict(self):
        doc = asdict(self)
        if doc["gamma_c_mode"] != "adaptive":
            doc["gamma_c_mode"] = {"fixed": float(doc["gamma_c_mode"])}
        doc["hidden"] = list(doc["hidden"])
        return doc

    def replace(self, **changes):
        doc = asdict(self)
        doc.update(changes)
        return TrainConfig(**doc)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


# ------------------------------------------------------------ update rules

def sgd_step(param, grad, eta, momentum_state=None, weight_decay=0.0, momentum=0.0):
    """One heavy-ball step.  Returns ``(new_param, new_momentum_state)``.

    ``v = momentum * v_prev + grad + weight_decay * param``;
    ``param <- param - eta * v``.
    """
    param = as_tensor(param)
    grad = as_tensor(grad)
    if param.shape != grad.shape:
        raise ShapeError(f"parameter shape {param.shape} != gradient shape {grad.shape}")
    v = grad + weight_decay * param
    if momentum_state is not None:
        if momentum_state.shape != param.shape:
            raise ShapeError(f"momentum state shape {momentum_state.shape} != {param.shape}")
        v = momentum * momentum_state + v
    return param - eta * v, v


def _ascent(grad, rho):
    n = l2_norm(grad)
    if n <= EPS_GRAD or rho == 0:
        return None
    return grad * (rho / n)


def sam_perturb(param, grad, rho1):
    """``param + rho1 * grad / ||grad||``; ``param`` itself when ``||grad|| <= 1e-12``."""
    if rho1 < 0:
        raise ParameterError(f"rho1 must be nonnegative, got {rho1}")
    step = _ascent(as_tensor(grad), rho1)
    return as_tensor(param).copy() if step is None else param + step


def asam_perturb(param, grad, rho):
    """Adaptive ascent with componentwise scale ``T = |param|``."""
    if rho < 0:
        raise ParameterError(f"rho must be nonnegative, got {rho}")
    param = as_tensor(param)
    t = np.abs(param)
    tg = t * grad
    n = l2_norm(tg)
    if n <= EPS_GRAD or rho == 0:
        return param.copy()
    return param + (rho / n) * (t * tg)


def two_direction_perturb(param, grad_tilde, grad_div, rho1, rho2):
    """Two independently normalized ascent directions added to ``param``."""
    out = as_tensor(param).copy()
    s1 = _ascent(grad_tilde, rho1)
    if s1 is not None:
        out = param + s1
    s2 = _ascent(grad_div, rho2)
    if s2 is not None:
        out = out + s2
    return out


# ---------------------------------------------------- per-member gradients

class _BatchState:
    """Logits and caches of every member on one batch, kept current."""

    def __init__(self, ens, batch):
        self.ens = ens
        self.batch = batch
        self.logits = []
        self.caches = []
        for mem in ens.members:
            z, c = forward(mem, batch.inputs)
            self.logits.append(z)
            self.caches.append(c)

    def refresh(self, i):
        z, c = forward(self.ens.members[i], self.batch.inputs)
        self.logits[i] = z
        self.caches[i] = c

    def grads(self, i, gamma, alpha, tau, want_div=True):
        """(tilde value, grad tilde, div value, grad div, dz tilde, dz div) at current theta_i."""
        y = self.batch.labels
        member = self.ens.members[i]
        tv, tdz = tilde_terms(self.logits, y, i, gamma, alpha)
        g_t = backward(member, self.caches[i], tdz)
        if not want_div:
            return tv, g_t, 0.0, None, tdz, None
        dv, ddz = nontarget_kl(self.logits, y, tau, i)
        g_d = backward(member, self.caches[i], ddz)
        return tv, g_t, dv, g_d, tdz, ddz

    def descent_grad(self, i, params, gamma, alpha, plain=False):
        member = self.ens.members[i]
        z, cache = forward(member, self.batch.inputs, params)
        if plain:
            _, dz = smoothed_ce(z, self.batch.labels, alpha)
        else:
            zs = list(self.logits)
            zs[i] = z
            _, dz = tilde_terms(zs, self.batch.labels, i, gamma, alpha)
        return backward(member, cache, dz)


def dash_perturb_two_direction(ens, batch, config, i):
    state = _BatchState(ens, batch)
    _, g_t, _, g_d, _, _ = state.grads(i, config.gamma, config.alpha, config.tau)
    return two_direction_perturb(ens.members[i].params, g_t, g_d, config.rho1, config.rho2)


def dash_perturb_combined(ens, batch, config, i, gamma_c=None):
    if gamma_c is None:
        gamma_c = resolve_gamma_c(ens, batch, config)
    state = _BatchState(ens, batch)
    return _combined_point(state, i, config, gamma_c)


def _combined_point(state, i, config, gamma_c, parts=None):
    member = state.ens.members[i]
    if parts is None:
        parts = state.grads(i, config.gamma, config.alpha, config.tau, want_div=gamma_c != 0.0)
    _, g_t, _, _, tdz, ddz = parts
    if gamma_c == 0.0:
        g = g_t
    else:
        g = backward(member, state.caches[i], tdz + gamma_c * ddz)
    return sam_perturb(member.params, g, config.rho1)


def resolve_gamma_c(ens, batch, config):
    """Fixed value, or the member-averaged ratio ||grad tilde|| / ||grad div|| capped at 100."""
    if config.gamma_c_mode != "adaptive":
        return float(config.gamma_c_mode)
    state = _BatchState(ens, batch)
    ratios = []
    for i in range(len(ens)):
        _, g_t, _, g_d, _, _ = state.grads(i, config.gamma, config.alpha, config.tau)
        ratios.append(gamma_c_ratio(g_t, g_d))
    return float(np.mean(ratios))


def gamma_c_ratio(grad_tilde, grad_div):
    return min(l2_norm(grad_tilde) / max(l2_norm(grad_div), EPS_GRAD), GAMMA_C_CAP)


# ------------------------------------------------------------- training loop

REPORT_FIELDS = (
    "epoch", "loss_tilde", "loss_div", "ens_train_acc", "member_train_acc",
    "ens_test_acc", "member_test_acc", "congruence", "gamma_c",
)


@dataclass
class TrainReport:
    rows: list = field(default_factory=list)
    checkpoint_path: str = None

    @property
    def mean_congruence(self):
        return float(np.mean([r["congruence"] for r in self.rows]))

    def to_csv(self):
        buf = io.StringIO()
        keys = [k for k in REPORT_FIELDS if any(k in r for r in self.rows)]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys)
        for r in self.rows:
            w.writerow([r[k] if k == "epoch" else repr(float(r[k])) for k in keys])
        return buf.getvalue()


def build_ensemble(config, input_dim, n_classes):
    sizes = [input_dim] + list(config.hidden) + [n_classes]
    return Ensemble.initialized(config.members, sizes, Rng(config.seed).child(0), config.activation)


def _accuracies(ens, dataset):
    zs = ens.all_logits(dataset.inputs)
    member_acc = [float(np.mean(z.argmax(axis=1) == dataset.labels)) for z in zs]
    probs = sum(softmax(z) for z in zs) / len(zs)
    return float(np.mean(probs.argmax(axis=1) == dataset.labels)), float(np.mean(member_acc))


def _perturbed_point(kind, state, i, config, gamma_c, parts):
    params = state.ens.members[i].params
    if kind == "sgd":
        return params
    _, g_t, _, g_d, _, _ = parts
    if kind == "sam":
        return sam_perturb(params, g_t, config.rho1)
    if kind == "asam":
        return asam_perturb(params, g_t, config.rho1)
    if kind == "dash_two_direction":
        return two_direction_perturb(params, g_t, g_d, config.rho1, config.rho2)
    return _combined_point(state, i, config, gamma_c, parts)


def _member_update(kind, state, i, config, gamma_c, need_div, velocity, plain, track_congruence):
    parts = state.grads(i, config.gamma, config.alpha, config.tau, want_div=need_div)
    tv, g_t, dv, g_d = parts[:4]
    if not (math.isfinite(tv) and math.isfinite(dv)):
        raise NumericError("non-finite loss")
    point = _perturbed_point(kind, state, i, config, gamma_c, parts)
    g = state.descent_grad(i, point, config.gamma, config.alpha, plain)
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite descent gradient")
    new, velocity[i] = sgd_step(state.ens.members[i].params, g, config.eta, velocity[i],
                                config.weight_decay, config.momentum)
    if not np.all(np.isfinite(new)):
        raise NumericError("non-finite parameters after update")
    cos = cosine(-g_t, g_d) if track_congruence else 0.0
    return tv, dv, cos, new


def train(ens, dataset, config, test=None, on_step=None, track_congruence=True):
    """Train a copy of ``ens`` on ``dataset``.  Returns ``(TrainReport, Ensemble)``.

    ``on_step(step, ensemble)`` is called after every mini-batch.  With
    ``track_congruence`` the cosine between the descent direction of the
    coupled loss and the diversity gradient is averaged into the report.
    """
    if dataset.inputs.shape[1] != ens.input_dim:
        raise ShapeError(f"data has {dataset.inputs.shape[1]} features, ensemble expects {ens.input_dim}")
    ens = ens.copy()
    m = len(ens)
    kind = config.optimizer
    plain = config.descent_loss == "plain"
    velocity = [None] * m
    shuffle_rng = Rng(config.seed).child(1)
    report = TrainReport()
    step = 0
    n = len(dataset)
    for epoch in range(config.epochs):
        perm = shuffle_rng.child(epoch).permutation(n)
        sums = {"loss_tilde": 0.0, "loss_div": 0.0, "congruence": 0.0}
        count = 0
        gamma_c = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            batch = dataset.batch(perm[start:start + config.batch_size])
            try:
                state = _BatchState(ens, batch)
                if kind == "dash_combined" and b == 0:
                    gamma_c = resolve_gamma_c(ens, batch, config)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch {b}, member all: {exc}") from None
            need_div = track_congruence or kind in ("dash_two_direction", "dash_combined")
            updates = []
            for i in range(m):
                try:
                    tv, dv, cos, new = _member_update(kind, state, i, config, gamma_c, need_div,
                                                      velocity, plain, track_congruence)
                    if config.update_order == "sequential":
                        ens.members[i].set_params(new)
                        state.refresh(i)
                    else:
                        updates.append(new)
                except NumericError as exc:
                    raise NumericError(f"epoch {epoch}, batch {b}, member {i}: {exc}") from None
                sums["loss_tilde"] += tv
                sums["loss_div"] += dv
                sums["congruence"] += cos
                count += 1
            for i, new in enumerate(updates):
                ens.members[i].set_params(new)
            step += 1
            if on_step is not None:
                on_step(step, ens)
        row = {"epoch": epoch + 1, "loss_tilde": sums["loss_tilde"] / count, "loss_div": sums["loss_div"] / count}
        row["ens_train_acc"], row["member_train_acc"] = _accuracies(ens, dataset)
        if test is not None:
            row["ens_test_acc"], row["member_test_acc"] = _accuracies(ens, test)
        if track_congruence:
            row["congruence"] = sums["congruence"] / count
        row["gamma_c"] = gamma_c
        report.rows.append(row)
    return report, ens
