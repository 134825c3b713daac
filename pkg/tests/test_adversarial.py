import numpy as np
import pytest

from dash_ensemble.adversarial import (
    AttackConfig, curve_to_csv, per_sample_ce, pgd_attack, project_linf, robust_accuracy_curve,
)
from dash_ensemble.data import Dataset, gen_two_moons
from dash_ensemble.errors import ParameterError
from dash_ensemble.model import Batch, Ensemble, MlpModel, input_gradient
from dash_ensemble.optimizer import TrainConfig, build_ensemble, train
from dash_ensemble.tensor import Rng


def linear_ensemble(w, b=0.0):
    """Two identical linear binary members: logit gap is ``w . x + b``."""
    d = len(w)
    W = np.zeros((d, 2))
    W[:, 1] = w
    params = np.concatenate([W.ravel(), [0.0, b]])
    return Ensemble([MlpModel([d, 2], params=params.copy()) for _ in range(2)])


def test_config_validation():
    with pytest.raises(ParameterError):
        AttackConfig(0.1, 0.3)
    with pytest.raises(ParameterError):
        AttackConfig(-0.1, 0.1)
    with pytest.raises(ParameterError):
        AttackConfig(0.1, 0.1, steps=0)
    AttackConfig(0.0, 1.0)


def test_zero_epsilon_returns_input(small_ensemble, small_batch):
    batch = small_batch(0)
    out = pgd_attack(small_ensemble(0), batch, AttackConfig(0.0, 0.1))
    assert np.array_equal(out, batch.inputs)


def test_single_step_is_fgsm(small_ensemble, small_batch):
    ens, batch = small_ensemble(1), small_batch(1)
    g = input_gradient(ens, batch, reduction="sum")
    out = pgd_attack(ens, batch, AttackConfig(0.05, 0.03, steps=1, keep_best=False))
    assert np.array_equal(out, batch.inputs + 0.03 * np.sign(g))


def test_linear_model_reaches_closed_form_corner():
    rng = np.random.default_rng(0)
    for trial in range(20):
        w = rng.normal(size=4)
        x = rng.normal(size=(10, 4))
        y = rng.integers(0, 2, 10)
        ens = linear_ensemble(w, 0.3)
        eps = 0.2
        out = pgd_attack(ens, Batch(x, y), AttackConfig(eps, 0.1, steps=5))
        # increasing the loss for label 0 raises the gap, for label 1 lowers it
        direction = np.where(y[:, None] == 0, 1.0, -1.0) * np.sign(w)
        expect = x + eps * direction
        assert np.allclose(out, expect, atol=1e-12)
        assert np.all(per_sample_ce(ens, out, y) >= per_sample_ce(ens, x, y))


def test_projection_is_exact_bitwise():
    rng = np.random.default_rng(1)
    for _ in range(50):
        x = rng.uniform(-1e3, 1e3, size=(20, 5))
        eps = float(rng.uniform(1e-8, 1.0))
        out = project_linf(x + rng.normal(scale=10, size=x.shape), x, eps)
        diff = out - x
        assert np.all(diff <= eps) and np.all(diff >= -eps)
    x = np.zeros((3, 2))
    out = project_linf(np.full((3, 2), 5.0), x, 1.0, lo=-0.5, hi=0.5)
    assert np.all(out == 0.5)


def test_attack_never_lowers_loss_and_respects_budget(small_ensemble, small_batch):
    for seed in range(10):
        ens, batch = small_ensemble(seed), small_batch(seed)
        cfg = AttackConfig(0.3, 0.1, steps=7)
        out = pgd_attack(ens, batch, cfg)
        assert np.all(np.abs(out - batch.inputs) <= 0.3)
        before = per_sample_ce(ens, batch.inputs, batch.labels).mean()
        after = per_sample_ce(ens, out, batch.labels).mean()
        assert after >= before - 1e-9


def test_random_start_is_deterministic_and_batch_independent(small_ensemble, small_batch):
    ens, batch = small_ensemble(2), small_batch(2)
    cfg = AttackConfig(0.2, 0.05, steps=3, random_start=True)
    a = pgd_attack(ens, batch, cfg, Rng(7))
    b = pgd_attack(ens, batch, cfg, Rng(7))
    assert np.array_equal(a, b)
    sub = Batch(batch.inputs[2:4], batch.labels[2:4])
    c = pgd_attack(ens, sub, cfg, Rng(7), indices=[2, 3])
    assert np.array_equal(c, a[2:4])


def test_curve_requires_ascending_and_zero_row_is_clean(small_ensemble, small_batch):
    ens, batch = small_ensemble(3), small_batch(3)
    ds = Dataset(batch.inputs, batch.labels, 4)
    with pytest.raises(ParameterError):
        robust_accuracy_curve(ens, ds, [0.2, 0.1], AttackConfig(0.1, 0.05))
    rows = robust_accuracy_curve(ens, ds, [0.0], AttackConfig(0.1, 0.05))
    clean = float(np.mean(ens.predict(ds.inputs).argmax(axis=1) == ds.labels))
    assert rows == [(0.0, clean)]
    assert curve_to_csv(rows).splitlines()[0] == "epsilon,accuracy"


def test_two_moons_attack_lowers_accuracy():
    ds = gen_two_moons(400, 0.1, seed=0)
    cfg = TrainConfig(optimizer="sgd", epochs=15, hidden=[16, 16], members=2, seed=0)
    _, ens = train(build_ensemble(cfg, 2, 2), ds, cfg, track_congruence=False)
    rows = robust_accuracy_curve(ens, ds, [0.0, 0.3], AttackConfig(0.3, 0.1, steps=10))
    assert rows[1][1] < rows[0][1]
