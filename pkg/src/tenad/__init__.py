"""Low-rank hard-label black-box attacks on order-4 video tensors."""
from .attack import (AttackConfig, AttackResult, FactorSet, assemble_direction, g_eval,
                     init_theta, loss_values, opt_attack_baseline, tenad_attack)
from .models import (BlackBoxModel, CentroidModel, LinearThresholdModel, ModelUnavailable,
                     SubprocessModel, analytic_boundary_distance)
from .tensor import (FactorMatrixSet, frobenius_norm, hosvd, mode_n_product, multilinear_rank,
                     outer_product, refold, unfold)

__version__ = "0.1.0"
