"""Multivariate Gaussian geostatistics with exact and tile low-rank likelihoods."""

__version__ = "0.1.0"

from .assess import AssessmentReport, DegenerateTargetError, mloe_mmom, mloe_mmom_univariate, mse_cross, mse_true
from .backend import LikelihoodBackend
from .covariance import InvalidParameterError, ParameterSet, Representation, assemble_sigma, cross_cov
from .dataset import SpatialDataset
from .geometry import LocationSet, euclidean_distance, generate_locations, great_circle_distance, morton_permutation
from .linalg import CholeskyFactor, NotPositiveDefiniteError, TiledMatrix, cholesky
from .mle import FitOptions, FitResult, fit, log_likelihood, profile_log_likelihood
from .predict import CokrigingPredictor, PredictionResult, cokrige, mspe
from .simulate import ExperimentConfig, run_experiment, simulate_field
from .specialfn import bessel_k, gamma
from .tlr import TLRMatrix, compress, dst_truncate, flop_estimate, footprint, tlr_cholesky, tlr_solve

__all__ = [
    "AssessmentReport",
    "CholeskyFactor",
    "CokrigingPredictor",
    "DegenerateTargetError",
    "ExperimentConfig",
    "FitOptions",
    "FitResult",
    "InvalidParameterError",
    "LikelihoodBackend",
    "LocationSet",
    "NotPositiveDefiniteError",
    "ParameterSet",
    "PredictionResult",
    "Representation",
    "SpatialDataset",
    "TLRMatrix",
    "TiledMatrix",
    "assemble_sigma",
    "bessel_k",
    "cholesky",
    "cokrige",
    "compress",
    "cross_cov",
    "dst_truncate",
    "euclidean_distance",
    "fit",
    "flop_estimate",
    "footprint",
    "gamma",
    "generate_locations",
    "great_circle_distance",
    "log_likelihood",
    "mloe_mmom",
    "mloe_mmom_univariate",
    "morton_permutation",
    "mse_cross",
    "mse_true",
    "mspe",
    "profile_log_likelihood",
    "run_experiment",
    "simulate_field",
    "tlr_cholesky",
    "tlr_solve",
]
