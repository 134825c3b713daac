"""Numeric evaluation of the sharpness-based PAC-Bayes bound for ensembles.

For ``m`` members of ``k`` parameters each, trained on ``N`` samples, with
radius ``rho`` and confidence ``1 - delta``::

    total = gamma * S_ens + (1 - gamma)/m * sum_i S_i
            + (C * L / sqrt(N)) * [ m * sqrt(log(m (N + k) / delta))
                                   + sum_i sqrt(k * log(1 + |theta_i|^2/rho^2 * (1 + sqrt(log N)/k)^2))
                                   + sqrt(k m * log(1 + sum_i |theta_i|^2/(m rho^2) * (1 + sqrt(log N/(m k)))^2))
                                   + O1 ]

where ``S_i`` is the worst empirical loss of member ``i`` within radius
``rho`` and ``S_ens`` that of the whole ensemble within ``sqrt(m) * rho``.
``C`` and ``O1`` stand in for the unresolved universal constant and the
additive constant; the result is only as meaningful as those choices and the
supplied sharp losses.
"""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ParameterError, SchemaError


@dataclass
class BoundInputs:
    m: int
    k: int
    N: int
    rho: float
    delta: float
    gamma: float
    L: float
    member_norms: list
    sharp_member_losses: list
    sharp_ensemble_loss: float
    C: float = 4.0
    O1: float = 0.0

    def validate(self):
        if self.m < 1 or self.k < 1 or self.N < 1:
            raise ParameterError(f"m, k, N must be >= 1, got {self.m}, {self.k}, {self.N}")
        if not 0.0 < self.delta < 1.0:
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.rho > 0:
            raise ParameterError(f"rho must be positive, got {self.rho}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ParameterError(f"gamma must lie in [0, 1], got {self.gamma}")
        if len(self.member_norms) != self.m or len(self.sharp_member_losses) != self.m:
            raise ParameterError("member_norms and sharp_member_losses need one entry per member")
        if min(self.member_norms) < 0:
            raise ParameterError("member norms must be nonnegative")
        return self

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(**doc).validate()
        except TypeError as exc:
            raise SchemaError(f"bad bound inputs: {exc}") from None

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return asdict(self)


@dataclass
class BoundBreakdown:
    sharp_term_ensemble: float
    sharp_term_members: float
    complexity_log_term: float
    member_kl_terms: list
    ensemble_kl_term: float
    o1_term: float
    prefactor: float
    complexity: float
    total: float
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["term", "value"])
        for key in ("sharp_term_ensemble", "sharp_term_members", "complexity_log_term"):
            w.writerow([key, repr(getattr(self, key))])
        for i, v in enumerate(self.member_kl_terms):
            w.writerow([f"member_kl_term_{i}", repr(v)])
        for key in ("ensemble_kl_term", "o1_term", "prefactor", "complexity", "total"):
            w.writerow([key, repr(getattr(self, key))])
        return buf.getvalue()


def member_kl_term(norm, rho, k, N):
    factor = (1.0 + math.sqrt(math.log(N)) / k) ** 2
    return math.sqrt(k * math.log1p(norm * norm / (rho * rho) * factor))


def ensemble_kl_term(norms, rho, k, N):
    m = len(norms)
    sq = float(np.sum(np.square(norms)))
    factor = (1.0 + math.sqrt(math.log(N) / (m * k))) ** 2
    return math.sqrt(k * m * math.log1p(sq / (m * rho * rho) * factor))


def evaluate_bound(inputs):
    inp = inputs.validate()
    m = inp.m
    confidence = m * math.sqrt(math.log(m * (inp.N + inp.k) / inp.delta))
    members = [member_kl_term(nrm, inp.rho, inp.k, inp.N) for nrm in inp.member_norms]
    ens_term = ensemble_kl_term(inp.member_norms, inp.rho, inp.k, inp.N)
    complexity = confidence + sum(members) + ens_term + inp.O1
    prefactor = inp.C * inp.L / math.sqrt(inp.N)
    sharp_ens = inp.gamma * inp.sharp_ensemble_loss
    sharp_mem = (1.0 - inp.gamma) / m * sum(inp.sharp_member_losses)
    notes = []
    if inp.N < 2:
        notes.append("N < 2: log N <= 0, the sqrt(log N) factors are not meaningful")
    return BoundBreakdown(
        sharp_term_ensemble=sharp_ens,
        sharp_term_members=sharp_mem,
        complexity_log_term=confidence,
        member_kl_terms=members,
        ensemble_kl_term=ens_term,
        o1_term=inp.O1,
        prefactor=prefactor,
        complexity=complexity,
        total=sharp_ens + sharp_mem + prefactor * complexity,
        notes=notes,
    )


def sigma_from_rho(rho, k, N):
    """Posterior scale that keeps a Gaussian draw within radius ``rho`` w.h.p."""
    if not rho > 0 or k < 1:
        raise ParameterError(f"need rho > 0 and k >= 1, got rho={rho}, k={k}")
    if N < 2:
        raise ParameterError(f"need N >= 2 so that log N > 0, got {N}")
    return rho / (math.sqrt(k) + math.sqrt(math.log(N)))


def gaussian_kl(sigma_q, sigma_p, mean_norm, k):
    """KL(N(theta, sigma_q^2 I_k) || N(0, sigma_p^2 I_k)) with ``|theta| = mean_norm``."""
    if not (sigma_q > 0 and sigma_p > 0):
        raise ParameterError(f"standard deviations must be positive, got {sigma_q}, {sigma_p}")
    sq, sp = sigma_q * sigma_q, sigma_p * sigma_p
    return 0.5 * ((k * sq + mean_norm * mean_norm) / sp - k + k * math.log(sp / sq))


# ------------------------------------------------------- sharp-loss search

def measure_sharp_losses(ens, batch, rho, samples=32, rng=None, alpha=0.0):
    """Random-search estimate of the worst losses within the perturbation balls.

    Member ``i``: max of its CE over ``theta_i + delta``, ``|delta| <= rho``.
    Ensemble: max of the mixture CE over joint perturbations with
    ``|delta| <= sqrt(m) * rho``.  The unperturbed point is always a
    candidate, so each estimate is at least the clean loss.
    """
    from .losses import mixture_ce_all, smoothed_ce
    from .tensor import Rng

    rng = rng if rng is not None else Rng(0)
    m = len(ens)
    y = batch.labels

    def ball(k, radius, r):
        d = r.normal(size=k)
        d /= np.linalg.norm(d)
        return d * radius * r.uniform() ** (1.0 / k)

    base = [mem.logits(batch.inputs) for mem in ens.members]
    member_losses = []
    for i, mem in enumerate(ens.members):
        best = smoothed_ce(base[i], y, alpha)[0]
        r = rng.child(1, i)
        for _ in range(samples):
            z = mem.logits(batch.inputs, mem.params + ball(mem.n_params, rho, r))
            best = max(best, smoothed_ce(z, y, alpha)[0])
        member_losses.append(best)
    ens_best = mixture_ce_all(base, y, alpha)[0]
    sizes = [mem.n_params for mem in ens.members]
    r = rng.child(2)
    for _ in range(samples):
        delta = ball(sum(sizes), math.sqrt(m) * rho, r)
        zs, off = [], 0
        for mem, k in zip(ens.members, sizes):
            zs.append(mem.logits(batch.inputs, mem.params + delta[off:off + k]))
            off += k
        ens_best = max(ens_best, mixture_ce_all(zs, y, alpha)[0])
    return member_losses, ens_best
