"""Censoring-aware neural Bayes estimators for spatial peaks-over-threshold models."""

from .censoring import CensoredTensor, CensoringScheme, censor_encode, preset_scheme
from .estimators import CensoringEncoder, NeuralBayesEstimator, PairwiseLikelihoodEstimator
from .exceptions import (
    CensoredNBEError, CheckpointError, FitFailed, InvalidArgument, InvalidData, NotApplicable,
    NotPositiveDefinite, NumericalError, SamplerError, TrainingFailed,
)
from .harness import bootstrap_estimates, evaluate_risk, run_experiment
from .likelihood import CplConfig, cpl_fit, cpl_objective, pair_loglik
from .margins import MarginTag
from .network import Architecture, EstimatorWeights, desk_architecture, grid16_architecture
from .processes import ProcessSpec, ReplicateSet, simulate, simulate_batch
from .spatial import build_grid, grid_preset, make_rng
from .training import PriorSpec, TrainConfig, estimate, mc_bayes_risk, train

__version__ = "0.1.0"

__all__ = [
    "Architecture", "CensoredNBEError", "CensoredTensor", "CensoringEncoder",
    "CensoringScheme", "CheckpointError", "CplConfig", "EstimatorWeights", "FitFailed",
    "InvalidArgument", "InvalidData", "MarginTag", "NeuralBayesEstimator", "NotApplicable",
    "NotPositiveDefinite", "NumericalError", "PairwiseLikelihoodEstimator", "PriorSpec",
    "ProcessSpec", "ReplicateSet", "SamplerError", "TrainConfig", "TrainingFailed",
    "bootstrap_estimates", "build_grid", "censor_encode", "cpl_fit", "cpl_objective",
    "desk_architecture", "estimate", "evaluate_risk", "grid_preset", "make_rng",
    "mc_bayes_risk", "pair_loglik", "preset_scheme", "run_experiment", "simulate",
    "simulate_batch", "grid16_architecture", "train",
]
