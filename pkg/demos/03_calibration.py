"""
Calibration and temperature scaling
===================================

Fits a temperature on a validation split and reports the metric suite
before and after scaling, along with a reliability table.
"""

from dash_ensemble import TrainConfig, build_ensemble, evaluate_ensemble, gen_spirals, split, train
from dash_ensemble.metrics import reliability_table

data = gen_spirals(1200, turns=0.75, noise_sd=0.1, classes=4, seed=7)
train_ds, val_ds, test_ds = split(data, (0.6, 0.2, 0.2), seed=0, stratified=True)

cfg = TrainConfig(epochs=25, hidden=[64, 64], batch_size=32)
_, ens = train(build_ensemble(cfg, 2, 4), train_ds, cfg, track_congruence=False)

rep = evaluate_ensemble(ens, test_ds.inputs, test_ds.labels, val_ds.inputs, val_ds.labels)
print(f"T* = {rep.optimal_temperature:.3f}")
print(f"nll   {rep.nll:.4f} -> {rep.cal_nll:.4f}")
print(f"brier {rep.brier:.4f} -> {rep.cal_brier:.4f}")
print(f"cal-aac {rep.cal_aac:.4f}  disagreement {rep.disagreement:.4f}  ld {rep.log_det:.2f}")

# confidence bins: (lower edge, upper edge, count, accuracy, mean confidence)
for lo, hi, count, acc, conf in reliability_table(ens.predict(test_ds.inputs), test_ds.labels, 10):
    if count:
        print(f"[{lo:.1f}, {hi:.1f})  n={count:<4d} acc {acc:.3f}  conf {conf:.3f}")
