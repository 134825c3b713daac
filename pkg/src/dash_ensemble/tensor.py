"""Dense float64 arithmetic and the seeded random stream.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C order.
The helpers here add the shape checks and finiteness guarantees the rest of
the package relies on.

Random numbers come from :class:`Rng`, a thin wrapper over numpy's Philox4x64
counter-based bit generator.  Philox output is a documented function of
``(key, counter)`` and numpy's ``Generator`` transforms (``random``,
``standard_normal``, ``permutation``) are stable across platforms, so a seed
pins a stream bit-for-bit.
"""

import numpy as np

from .errors import NumericError, ParameterError, ShapeError

EPS_GRAD = 1e-12


def as_tensor(x, ndim=None):
    """Return ``x`` as a contiguous float64 array, optionally checking its rank."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeError(f"expected a {ndim}-d tensor, got shape {arr.shape}")
    return arr


def check_finite(x, what="tensor"):
    if not np.all(np.isfinite(x)):
        bad = np.argwhere(~np.isfinite(np.asarray(x)))
        raise NumericError(f"{what} contains non-finite values (first at index {tuple(bad[0])})")
    return x


def matmul(a, b):
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return check_finite(a @ b, "matmul result")


def softmax(logits, temperature=1.0):
    """Row-wise softmax of ``logits / temperature`` with max subtraction."""
    if not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    z = as_tensor(logits)
    z = z / temperature if temperature != 1.0 else z
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits, temperature=1.0):
    if not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    z = as_tensor(logits)
    z = z / temperature if temperature != 1.0 else z
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def l2_norm(v):
    v = np.asarray(v, dtype=np.float64).ravel()
    return float(np.sqrt(np.dot(v, v)))


def cosine(a, b):
    na, nb = l2_norm(a), l2_norm(b)
    if na <= EPS_GRAD or nb <= EPS_GRAD:
        return 0.0
    return float(np.dot(np.ravel(a), np.ravel(b)) / (na * nb))


class Rng:
    """Seeded Philox stream.

    ``Rng(seed)`` keys Philox4x64 with a SeedSequence built from the seed, so
    the same seed reproduces the same numbers on any machine.  ``child(*key)``
    derives an independent stream from ``(seed, *key)`` without consuming
    this stream, which is how per-sample or per-member streams are made.
    """

    def __init__(self, seed=0):
        seed = int(seed)
        if seed < 0 or seed >= 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self._key = (seed,)
        self._gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(self._key)))

    @classmethod
    def _from_key(cls, key):
        obj = cls.__new__(cls)
        obj.seed = key[0]
        obj._key = tuple(key)
        obj._gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))
        return obj

    def child(self, *key):
        return Rng._from_key(self._key + tuple(int(k) for k in key))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def bytes(self, n):
        return self._gen.bytes(n)
