import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dash_ensemble.bound import (
    BoundInputs, evaluate_bound, gaussian_kl, measure_sharp_losses, sigma_from_rho,
)
from dash_ensemble.errors import ParameterError, SchemaError
from dash_ensemble.losses import mixture_ce_all, smoothed_ce
from oracles import transcribed_total
from dash_ensemble.tensor import Rng


def make(**over):
    base = dict(m=3, k=50, N=1000, rho=0.05, delta=0.05, gamma=0.3, L=1.0,
                member_norms=[1.0, 2.0, 3.0], sharp_member_losses=[0.3, 0.4, 0.5],
                sharp_ensemble_loss=0.35)
    base.update(over)
    return BoundInputs(**base)


def test_single_member_example_matches_transcription():
    inp = make(m=1, k=2, N=100, rho=1.0, delta=0.1, gamma=0.5, member_norms=[1.0],
               sharp_member_losses=[0.2], sharp_ensemble_loss=0.3)
    ref = transcribed_total(1, 2, 100, 1.0, 0.1, 0.5, 1.0, [1.0], [0.2], 0.3)
    assert abs(evaluate_bound(inp).total - ref) < 1e-12


@settings(max_examples=200, deadline=None)
@given(m=st.integers(1, 6), k=st.integers(1, 10_000), N=st.integers(2, 10 ** 6),
       rho=st.floats(1e-3, 5), delta=st.floats(1e-4, 0.99), gamma=st.floats(0, 1),
       seed=st.integers(0, 10 ** 6))
def test_random_inputs_match_transcription(m, k, N, rho, delta, gamma, seed):
    rng = np.random.default_rng(seed)
    norms = rng.uniform(0, 20, m).tolist()
    sm = rng.uniform(0, 2, m).tolist()
    inp = make(m=m, k=k, N=N, rho=rho, delta=delta, gamma=gamma, member_norms=norms,
               sharp_member_losses=sm, sharp_ensemble_loss=0.7, O1=0.25)
    ref = transcribed_total(m, k, N, rho, delta, gamma, 1.0, norms, sm, 0.7, O1=0.25)
    assert abs(evaluate_bound(inp).total - ref) <= 1e-12 * max(1.0, abs(ref))


def test_breakdown_composes_total():
    b = evaluate_bound(make(O1=0.5))
    comp = b.complexity_log_term + sum(b.member_kl_terms) + b.ensemble_kl_term + b.o1_term
    assert b.complexity == comp
    assert b.total == b.sharp_term_ensemble + b.sharp_term_members + b.prefactor * comp


def test_zero_norms_remove_kl_terms():
    b = evaluate_bound(make(member_norms=[0.0, 0.0, 0.0], O1=0.1))
    assert b.member_kl_terms == [0.0, 0.0, 0.0] and b.ensemble_kl_term == 0.0
    assert abs(b.complexity - (3 * math.sqrt(math.log(3 * 1050 / 0.05)) + 0.1)) < 1e-12


def test_gamma_endpoints_and_linearity():
    assert evaluate_bound(make(gamma=1.0)).sharp_term_members == 0.0
    assert evaluate_bound(make(gamma=0.0)).sharp_term_ensemble == 0.0
    t0, t1 = evaluate_bound(make(gamma=0.0)).total, evaluate_bound(make(gamma=1.0)).total
    for g in np.linspace(0, 1, 11):
        assert abs(evaluate_bound(make(gamma=g)).total - ((1 - g) * t0 + g * t1)) < 1e-12


def test_complexity_monotone_in_norms_and_members():
    rng = np.random.default_rng(0)
    for _ in range(100):
        norms = rng.uniform(0, 10, 4)
        i = rng.integers(0, 4)
        bumped = norms.copy()
        bumped[i] += rng.uniform(0, 3)
        a = evaluate_bound(make(m=4, member_norms=norms.tolist(), sharp_member_losses=[0.0] * 4))
        b = evaluate_bound(make(m=4, member_norms=bumped.tolist(), sharp_member_losses=[0.0] * 4))
        assert b.member_kl_terms[i] >= a.member_kl_terms[i]
        assert b.ensemble_kl_term >= a.ensemble_kl_term
        assert b.complexity >= a.complexity
    prev = None
    for m in range(1, 8):
        c = evaluate_bound(make(m=m, member_norms=[2.0] * m, sharp_member_losses=[0.0] * m)).complexity
        assert prev is None or c >= prev
        prev = c


def test_complexity_contribution_decreases_with_samples():
    vals = []
    for N in (10 ** 2, 10 ** 3, 10 ** 4):
        b = evaluate_bound(make(N=N))
        vals.append(b.prefactor * b.complexity)
    assert vals[0] > vals[1] > vals[2]


@pytest.mark.parametrize("over", [dict(delta=0.0), dict(delta=1.0), dict(rho=0.0), dict(rho=-1.0),
                                  dict(gamma=1.5), dict(member_norms=[1.0])])
def test_invalid_inputs(over):
    with pytest.raises(ParameterError):
        evaluate_bound(make(**over))


def test_json_round_trip_and_schema_errors(tmp_path):
    path = tmp_path / "in.json"
    path.write_text(json.dumps(make().to_dict()))
    assert BoundInputs.from_json(path) == make()
    with pytest.raises(SchemaError):
        BoundInputs.from_dict({"m": 1})
    csv_lines = evaluate_bound(make()).to_csv().splitlines()
    assert csv_lines[0] == "term,value" and csv_lines[-1].startswith("total,")


def test_sigma_from_rho():
    assert abs(sigma_from_rho(1.0, 4, math.e) - 1 / 3) < 1e-15
    vals = [sigma_from_rho(0.5, k, 1000) for k in range(1, 50)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    rng = np.random.default_rng(1)
    for _ in range(100):
        rho, k, N = rng.uniform(0.01, 3), int(rng.integers(1, 1000)), int(rng.integers(2, 10 ** 6))
        assert abs(sigma_from_rho(rho, k, N) - rho / (k ** 0.5 + math.log(N) ** 0.5)) < 1e-15
    with pytest.raises(ParameterError):
        sigma_from_rho(1.0, 4, 1)


def test_gaussian_kl():
    assert gaussian_kl(0.7, 0.7, 0.0, 5) == 0.0
    assert abs(gaussian_kl(1.0, 2.0, 0.0, 1) - 0.5 * (0.25 - 1 + math.log(4))) < 1e-15
    assert abs(gaussian_kl(1.0, 2.0, 0.0, 1) - 0.3181) < 1e-4
    rng = np.random.default_rng(2)
    for _ in range(1000):
        sq, sp, t, k = rng.uniform(0.01, 5), rng.uniform(0.01, 5), rng.uniform(0, 10), int(rng.integers(1, 100))
        assert gaussian_kl(sq, sp, t, k) >= -1e-12
        best_p = math.sqrt(sq ** 2 + t ** 2 / k)
        assert abs(gaussian_kl(sq, best_p, t, k) - 0.5 * k * math.log1p(t ** 2 / (k * sq ** 2))) < 1e-9
    with pytest.raises(ParameterError):
        gaussian_kl(0.0, 1.0, 0.0, 1)


def test_measured_sharp_losses_dominate_clean_loss(small_ensemble, small_batch):
    ens = small_ensemble(0)
    batch = small_batch(0)
    inputs, labels = batch.inputs, batch.labels
    members, ens_loss = measure_sharp_losses(ens, batch, rho=0.1, samples=8, rng=Rng(3))
    zs = [mem.logits(inputs) for mem in ens.members]
    for z, v in zip(zs, members):
        assert v >= smoothed_ce(z, labels, 0.0)[0]
    assert ens_loss >= mixture_ce_all(zs, labels, 0.0)[0]
    again = measure_sharp_losses(ens, batch, rho=0.1, samples=8, rng=Rng(3))
    assert again == (members, ens_loss)
