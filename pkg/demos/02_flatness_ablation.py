"""
Flat-seeking versus diversity-aware perturbations
=================================================

Compares SGD, the sharpness update without the diversity direction
(``rho2 = 0``) and the full update on four-arm spirals.  With four classes
each sample has three non-target probabilities, so three members can span
distinct directions and the log-determinant diversity is informative.
"""

from dash_ensemble import TrainConfig
from dash_ensemble.experiments import (
    ABLATION_FIELDS, BENCHMARK_TRAINING, ablation, ablation_summary, rows_to_csv, spirals_benchmark, with_means,
)

train_ds, test_ds = spirals_benchmark()
print(f"{len(train_ds)} train / {len(test_ds)} test points, {train_ds.n_classes} classes")

# a shorter run than the full benchmark keeps this demo quick
cfg = TrainConfig(**dict(BENCHMARK_TRAINING, epochs=15))
rows = ablation(train_ds, test_ds, cfg, seeds=[0, 1])
rows = with_means(rows, ("variant",), ("congruence", "accuracy", "ld", "d", "avg_accuracy"))
print(rows_to_csv(rows, ABLATION_FIELDS))

# count the seeds on which each ordering holds
print(ablation_summary(rows))
