"""Learning from label proportions by forward-corrected losses.

Bags are grouped ``C`` at a time; inside a group each bag's points get the
bag's position as a noisy label, and a per-group transition matrix corrects
the log loss so that minimising it recovers the clean posterior.
"""

from .bags import Bag, Dataset, LLPInstance, generate_bags, pooled_prior
from .baselines import KLBaselineConfig, kl_bag_loss, train_kl
from .errors import AssumptionViolation, ConfigError, ConvergenceFailure, DataError, LLPError, SingularMatrix
from .losses import CompositeFCLoss, fc_loss_gradient, fc_loss_value
from .models import Classifier, evaluate, init_classifier
from .reduction import build_approx, build_group_models, build_ideal, build_uniform, optimal_weights, random_partition
from .simplex import invert, matrix_one_norm, project_to_simplex, solve_simplex_least_squares
from .trainer import MetricsLog, TrainConfig, train, train_supervised

__version__ = "0.1.0"
