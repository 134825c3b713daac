"""MLP members with hand-written backprop and the averaged-softmax ensemble.

A member stores all of its parameters in one flat float64 vector; the
per-layer weight matrices and bias vectors are views into it.  Layout, per
layer in order: ``W`` (fan_in x fan_out, row-major) then ``b`` (fan_out).
Forward passes compute ``a_l = act(a_{l-1} @ W_l + b_l)`` with no activation
on the final (logit) layer.
"""

from dataclasses import dataclass

import numpy as np

from .errors import SchemaError, ShapeError, StateError, ParameterError
from .tensor import as_tensor, check_finite, softmax

ACTIVATIONS = ("relu", "tanh")


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = as_tensor(self.inputs, ndim=2)
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.inputs.shape[0] < 1:
            raise ShapeError("a batch needs at least one row")
        if self.labels.shape[0] != self.inputs.shape[0]:
            raise ShapeError(f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels")
        if self.labels.min() < 0:
            raise IndexError(f"negative label {self.labels.min()}")

    def __len__(self):
        return self.inputs.shape[0]


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre: list
    post: list
    params: np.ndarray
    version: int


def _param_shapes(layer_sizes):
    return [((a, b), (b,)) for a, b in zip(layer_sizes[:-1], layer_sizes[1:])]


class MlpModel:
    def __init__(self, layer_sizes, activation="relu", params=None):
        layer_sizes = [int(s) for s in layer_sizes]
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:
            raise ParameterError(f"layer sizes must be >= 2 positive integers, got {layer_sizes}")
        if activation not in ACTIVATIONS:
            raise ParameterError(f"activation must be one of {ACTIVATIONS}, got {activation!r}")
        self.layer_sizes = layer_sizes
        self.activation = activation
        self._shapes = _param_shapes(layer_sizes)
        self.n_params = sum(w[0] * w[1] + b[0] for w, b in self._shapes)
        self._version = 0
        self.params = np.zeros(self.n_params) if params is None else self._check_vec(params).copy()

    @classmethod
    def initialized(cls, layer_sizes, rng, activation="relu"):
        """Glorot-uniform weights, zero biases, drawn from ``rng``."""
        model = cls(layer_sizes, activation)
        vec = np.zeros(model.n_params)
        for (w_off, w_shape), (b_off, _) in model._offsets():
            fan_in, fan_out = w_shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            vec[w_off:w_off + fan_in * fan_out] = rng.uniform(-limit, limit, fan_in * fan_out)
        model.set_params(vec)
        return model

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def n_classes(self):
        return self.layer_sizes[-1]

    def _check_vec(self, vec):
        vec = as_tensor(vec).ravel()
        if vec.shape[0] != self.n_params:
            raise ShapeError(f"parameter vector has length {vec.shape[0]}, model needs {self.n_params}")
        return vec

    def _offsets(self):
        off = 0
        for w_shape, b_shape in self._shapes:
            w_off = off
            off += w_shape[0] * w_shape[1]
            b_off = off
            off += b_shape[0]
            yield (w_off, w_shape), (b_off, b_shape)

    def layers(self, params=None):
        """List of ``(W, b)`` views into ``params`` (default: own parameters)."""
        vec = self.params if params is None else params
        out = []
        for (w_off, w_shape), (b_off, b_shape) in self._offsets():
            out.append((vec[w_off:w_off + w_shape[0] * w_shape[1]].reshape(w_shape),
                        vec[b_off:b_off + b_shape[0]]))
        return out

    def flatten(self):
        return self.params.copy()

    def set_params(self, vec):
        self.params = self._check_vec(vec).copy()
        self._version += 1

    unflatten = set_params

    def copy(self):
        twin = MlpModel(self.layer_sizes, self.activation, self.params)
        return twin

    def forward(self, inputs, params=None):
        return forward(self, inputs, params)

    def logits(self, inputs, params=None):
        return forward(self, inputs, params)[0]

    def to_dict(self):
        layers = self.layers()
        return {
            "layer_sizes": list(self.layer_sizes),
            "activation": self.activation,
            "weights": [w.tolist() for w, _ in layers],
            "biases": [b.tolist() for _, b in layers],
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            model = cls(doc["layer_sizes"], doc["activation"])
            parts = []
            for (w_shape, b_shape), w, b in zip(model._shapes, doc["weights"], doc["biases"], strict=True):
                w = np.asarray(w, dtype=np.float64)
                b = np.asarray(b, dtype=np.float64)
                if w.shape != w_shape or b.shape != b_shape:
                    raise SchemaError(f"layer shapes {w.shape}/{b.shape} do not match {w_shape}/{b_shape}")
                parts.extend([w.ravel(), b])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"bad member document: {exc}") from exc
        model.set_params(np.concatenate(parts))
        return model


def _act(name, z):
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _act_grad(name, z, a):
    return (z > 0).astype(np.float64) if name == "relu" else 1.0 - a * a


def forward(model, inputs, params=None):
    """Logits for ``inputs`` plus the cache ``backward`` needs.

    ``params`` evaluates the network at another parameter vector (e.g. a
    perturbed one) without touching the model.
    """
    x = as_tensor(inputs, ndim=2)
    if x.shape[1] != model.input_dim:
        raise ShapeError(f"input width {x.shape[1]} does not match model input dim {model.input_dim}")
    vec = model.params if params is None else model._check_vec(params)
    pre, post = [], [x]
    layers = model.layers(vec)
    a = x
    for li, (w, b) in enumerate(layers):
        z = a @ w + b
        pre.append(z)
        a = z if li == len(layers) - 1 else _act(model.activation, z)
        post.append(a)
    check_finite(a, "logits")
    return a, ForwardCache(x, pre, post, vec, model._version if params is None else -1)


def backward(model, cache, dlogits, input_grad=False):
    """Gradient of a scalar loss w.r.t. all parameters, given dloss/dlogits.

    Returns the flat gradient, or ``(grad, dinputs)`` when ``input_grad``.
    """
    if cache.version >= 0 and cache.version != model._version:
        raise StateError("forward cache is stale: model parameters changed after the forward pass")
    layers = model.layers(cache.params)
    delta = as_tensor(dlogits, ndim=2)
    if delta.shape != cache.pre[-1].shape:
        raise ShapeError(f"upstream gradient shape {delta.shape} != logits shape {cache.pre[-1].shape}")
    grad = np.empty(model.n_params)
    offsets = list(model._offsets())
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        (w_off, w_shape), (b_off, b_shape) = offsets[li]
        grad[w_off:w_off + w_shape[0] * w_shape[1]] = (cache.post[li].T @ delta).ravel()
        grad[b_off:b_off + b_shape[0]] = delta.sum(axis=0)
        if li > 0 or input_grad:
            delta = delta @ w.T
            if li > 0:
                delta = delta * _act_grad(model.activation, cache.pre[li - 1], cache.post[li])
    if input_grad:
        return grad, delta
    return grad


class Ensemble:
    """``m >= 2`` members sharing input dimension and class count."""

    def __init__(self, members):
        members = list(members)
        if len(members) < 2:
            raise StateError(f"an ensemble needs at least 2 members, got {len(members)}")
        d, M = members[0].input_dim, members[0].n_classes
        for k, mem in enumerate(members):
            if mem.input_dim != d or mem.n_classes != M:
                raise ShapeError(f"member {k} has (d, M) = ({mem.input_dim}, {mem.n_classes}), expected ({d}, {M})")
        self.members = members

    @classmethod
    def initialized(cls, m, layer_sizes, rng, activation="relu"):
        """``m`` members with identical architecture, each from its own child stream."""
        return cls([MlpModel.initialized(layer_sizes, rng.child(i), activation) for i in range(m)])

    def __len__(self):
        return len(self.members)

    @property
    def input_dim(self):
        return self.members[0].input_dim

    @property
    def n_classes(self):
        return self.members[0].n_classes

    def all_logits(self, inputs):
        return [mem.logits(inputs) for mem in self.members]

    def predict(self, inputs, temperature=1.0):
        return ensemble_predict(self, inputs, temperature)

    def copy(self):
        return Ensemble([m.copy() for m in self.members])

    def to_dict(self, config=None):
        doc = {"members": [m.to_dict() for m in self.members]}
        if config is not None:
            doc["config"] = config
        return doc

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict) or "members" not in doc:
            raise SchemaError("ensemble checkpoint must be an object with a 'members' array")
        return cls([MlpModel.from_dict(m) for m in doc["members"]])


def ensemble_predict(ens, inputs, temperature=1.0):
    """Mean of member softmax outputs (member logits divided by ``temperature``)."""
    if ens is None or len(getattr(ens, "members", ())) == 0:
        raise StateError("cannot predict with an empty ensemble")
    probs = None
    for mem in ens.members:
        p = softmax(mem.logits(inputs), temperature)
        probs = p if probs is None else probs + p
    return probs / len(ens.members)


def input_gradient(model_or_ensemble, batch, loss="ce", alpha=0.0, reduction="mean"):
    """d(loss)/d(inputs) for a single member or for the ensemble mixture.

    ``loss`` is ``"ce"`` (label-smoothed with ``alpha``) on the member's own
    softmax, or on the averaged-softmax prediction for an ensemble.
    ``reduction="sum"`` returns per-sample gradients of the unaveraged loss.
    """
    from .losses import mixture_ce_all, smoothed_ce

    if loss != "ce":
        raise ParameterError(f"unsupported loss {loss!r}")
    scale = float(len(batch)) if reduction == "sum" else 1.0
    if isinstance(model_or_ensemble, Ensemble):
        caches, logits = [], []
        for mem in model_or_ensemble.members:
            z, c = forward(mem, batch.inputs)
            logits.append(z)
            caches.append(c)
        _, dzs = mixture_ce_all(logits, batch.labels, alpha)
        dx = np.zeros_like(batch.inputs)
        for mem, c, dz in zip(model_or_ensemble.members, caches, dzs):
            dx += backward(mem, c, dz * scale, input_grad=True)[1]
        return dx
    z, c = forward(model_or_ensemble, batch.inputs)
    _, dz = smoothed_ce(z, batch.labels, alpha)
    return backward(model_or_ensemble, c, dz * scale, input_grad=True)[1]
