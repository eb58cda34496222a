"""Attentional Boltzmann machines.

An AttnBM is the Gibbs distribution ``exp(-beta E(v)) / Z`` with the
modern-Hopfield energy ``E(v) = |v|^2 / 2 - log sum_mu exp(xi_mu . v)``.
For positive integer ``beta`` its partition function, likelihood gradient
and sampler are exact, because the density is an isotropic Gaussian
mixture.

The functional API lives in the submodules (:mod:`~attnbm.energy`,
:mod:`~attnbm.gmm`, :mod:`~attnbm.training`, ...); scikit-learn style
estimators are in :mod:`~attnbm.estimators`.
"""

from .data import Dataset, ZcaTransform, apply_zca, export_filter_grid, extract_patches, fit_zca, load_idx
from .efh import EfhSpec, GridDomain, LagrangianPair, cd_k, energy_a, to_efh
from .energy import (
    AttnBMModel,
    energy_b,
    grad_log_partition,
    grad_nll,
    jensen_log_partition_bound,
    load_model,
    log_likelihood,
    log_partition,
    save_model,
)
from .estimators import AttentionalBoltzmannMachine, ModelABoltzmannMachine, ZCAWhitening
from .exceptions import (
    AttnBMError,
    BudgetExceededError,
    FormatError,
    GridWarning,
    TrainingDivergedError,
    UnsupportedBetaError,
)
from .gmm import GaussianMixture, expand_beta, gmm_density, gmm_log_density, to_gmm
from .hopfield import retrieve, update_step
from .reconstruction import PartialObservation, conditional_mixture, impute_mean
from .training import TrainConfig, TrainReport, dsm_grad, dsm_objective, sgd_mle, train_dsm
from .vmf import VmfParams, vmf_log_density, vmf_sample

__version__ = "0.1.0"

__all__ = [
    "AttentionalBoltzmannMachine",
    "AttnBMError",
    "AttnBMModel",
    "BudgetExceededError",
    "Dataset",
    "EfhSpec",
    "FormatError",
    "GaussianMixture",
    "GridDomain",
    "GridWarning",
    "LagrangianPair",
    "ModelABoltzmannMachine",
    "PartialObservation",
    "TrainConfig",
    "TrainReport",
    "TrainingDivergedError",
    "UnsupportedBetaError",
    "VmfParams",
    "ZCAWhitening",
    "ZcaTransform",
    "apply_zca",
    "cd_k",
    "conditional_mixture",
    "dsm_grad",
    "dsm_objective",
    "energy_a",
    "energy_b",
    "expand_beta",
    "export_filter_grid",
    "extract_patches",
    "fit_zca",
    "gmm_density",
    "gmm_log_density",
    "grad_log_partition",
    "grad_nll",
    "impute_mean",
    "jensen_log_partition_bound",
    "load_idx",
    "load_model",
    "log_likelihood",
    "log_partition",
    "retrieve",
    "save_model",
    "sgd_mle",
    "to_efh",
    "to_gmm",
    "train_dsm",
    "update_step",
    "vmf_log_density",
    "vmf_sample",
]
