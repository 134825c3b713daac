"""
Evaluating the sharpness bound
==============================

Measures worst-case losses around a trained ensemble by random search in
the perturbation balls and plugs them into the PAC-Bayes bound.  The
universal constant ``C`` and the additive term are explicit inputs, so the
absolute value says little; the breakdown shows which terms dominate.
"""

import numpy as np

from dash_ensemble import BoundInputs, Rng, TrainConfig, build_ensemble, evaluate_bound, gen_two_moons, train
from dash_ensemble.bound import measure_sharp_losses, sigma_from_rho

data = gen_two_moons(500, noise_sd=0.1, seed=0)
cfg = TrainConfig(epochs=15, hidden=[16, 16])
_, ens = train(build_ensemble(cfg, 2, 2), data, cfg, track_congruence=False)

rho = 0.05
members, ensemble = measure_sharp_losses(ens, data.batch(), rho, samples=32, rng=Rng(0))
inputs = BoundInputs(
    m=len(ens), k=ens.members[0].n_params, N=len(data), rho=rho, delta=0.05, gamma=0.1, L=1.0,
    member_norms=[float(np.linalg.norm(mem.params)) for mem in ens.members],
    sharp_member_losses=members, sharp_ensemble_loss=ensemble,
)
out = evaluate_bound(inputs)
print(out.to_csv())
print(f"posterior scale for rho={rho}: {sigma_from_rho(rho, inputs.k, inputs.N):.5f}")

# the complexity term shrinks like 1/sqrt(N)
for n in (10**3, 10**4, 10**5):
    b = evaluate_bound(BoundInputs(**dict(inputs.to_dict(), N=n)))
    print(n, round(b.prefactor * b.complexity, 4))
