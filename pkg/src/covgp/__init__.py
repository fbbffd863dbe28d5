"""Nearest-neighbor Gaussian-process regression with Matérn kernels and
coverage-constrained hyperparameter training."""

from covgp.bayesopt import BayesOptConfig, SearchSpace, bayes_opt_minimize
from covgp.datagen import SyntheticSpec, load_dataset, sample_gp, save_dataset, split
from covgp.kernel import MaternParams, covariance_matrix, matern, pairwise_distances
from covgp.kriging import Dataset, KrigingError, PosteriorMoments, dense_posterior, loocv_posterior, predict
from covgp.metrics import MetricsReport, crps_gaussian, evaluate, interval_score
from covgp.neighbors import NeighborIndex, build_index
from covgp.objective import (
    BatchEvaluation,
    ConfidenceLevels,
    LagrangeState,
    augmented_lagrangian,
    constraint_residual,
    coverage,
    lool_loss,
    mse_loss,
    z_score,
)
from covgp.optimizer import (
    MultipliersConfig,
    TrainingError,
    TrainResult,
    sample_batch,
    train_constrained,
    train_unconstrained,
)
from covgp.special import bessel_k

__version__ = "0.1.0"
