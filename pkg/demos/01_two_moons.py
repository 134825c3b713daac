"""
Training an ensemble on two moons
=================================

Three small MLPs are trained on the two-moons toy set, once with plain SGD
and once with the diversity-aware sharpness update.  With only two classes
the non-target prediction vector has a single entry, so the diversity term
is identically zero and the sharpness step is the only difference.
"""

import numpy as np

from dash_ensemble import TrainConfig, build_ensemble, evaluate_ensemble, gen_two_moons, train

train_ds = gen_two_moons(600, noise_sd=0.15, seed=0)
test_ds = gen_two_moons(1000, noise_sd=0.15, seed=1)

# one config per optimizer; everything else is shared
for name in ("sgd", "dash_two_direction"):
    cfg = TrainConfig(optimizer=name, epochs=20, seed=0)
    report, ens = train(build_ensemble(cfg, 2, 2), train_ds, cfg, test=test_ds)
    rep = evaluate_ensemble(ens, test_ds.inputs, test_ds.labels)
    print(f"{name:<20} test acc {rep.accuracy:.3f}  nll {rep.nll:.3f}  ece {rep.ece:.3f}")

# the per-epoch report is a plain CSV
print(report.to_csv().splitlines()[0])
print(report.to_csv().splitlines()[-1])

# a grid of ensemble predictions, e.g. for a contour plot
xx, yy = np.meshgrid(np.linspace(-1.5, 2.5, 5), np.linspace(-1, 1.5, 5))
probs = ens.predict(np.column_stack([xx.ravel(), yy.ravel()]))
print(np.round(probs[:, 1].reshape(xx.shape), 2))
