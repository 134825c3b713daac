"""Sharpness-aware ensemble training with diversity-aware perturbations.

A small numpy MLP core, SGD/SAM/ASAM/DASH training, uncertainty and
diversity metrics, PGD robustness curves and a PAC-Bayes bound evaluator.
"""

from .adversarial import AttackConfig, pgd_attack, robust_accuracy_curve
from .bound import BoundBreakdown, BoundInputs, evaluate_bound, gaussian_kl, sigma_from_rho
from .data import Dataset, gen_spirals, gen_two_moons, load_delimited, save_delimited, split, standardize
from .losses import (
    LossValue, ce_label_smoothing, combined_loss, diversity_loss, ensemble_loss, member_loss, tilde_loss,
)
from .metrics import (
    MetricsReport, accuracy, brier, cal_aac, disagreement, ece, evaluate_ensemble, log_det_diversity, nll,
    temperature_scale,
)
from .model import Batch, Ensemble, MlpModel, backward, ensemble_predict, forward, input_gradient
from .optimizer import (
    TrainConfig, TrainReport, asam_perturb, build_ensemble, dash_perturb_combined, dash_perturb_two_direction,
    resolve_gamma_c, sam_perturb, sgd_step, train,
)
from .tensor import Rng, l2_norm, matmul, softmax

__version__ = "0.1.0"
