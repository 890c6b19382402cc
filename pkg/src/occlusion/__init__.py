"""Occlusion process: MCMC variance reduction through region-restricted
rejection samples produced in parallel with the chain."""

from .core import (
    ChainTrace,
    MarkovKernel,
    OcclusionResult,
    RegionPartition,
    RestrictedPool,
    TargetModel,
    VariationalModel,
    log_rn_derivative,
    occlude,
    occluded_estimate,
    region_index,
    rejection_attempt,
)
from .runtime import RunConfig, RunReport, orchestrate, run_occlusion, seed_stream
from .theory import (
    AcfResult,
    DiscreteSystem,
    ResolutionPair,
    acf,
    brute_force_chain_variance,
    brute_force_ideal_variance,
    brute_force_occluded_variance,
    chain_variance_formula,
    ideal_variance_formula,
    occluded_variance_formula,
    proportional_variance_identity,
    resolution,
    stratified_estimate,
    variance_dominance_check,
)

__all__ = [
    "AcfResult",
    "ChainTrace",
    "DiscreteSystem",
    "MarkovKernel",
    "OcclusionResult",
    "RegionPartition",
    "ResolutionPair",
    "RestrictedPool",
    "RunConfig",
    "RunReport",
    "TargetModel",
    "VariationalModel",
    "acf",
    "brute_force_chain_variance",
    "brute_force_ideal_variance",
    "brute_force_occluded_variance",
    "chain_variance_formula",
    "ideal_variance_formula",
    "log_rn_derivative",
    "occlude",
    "occluded_estimate",
    "occluded_variance_formula",
    "orchestrate",
    "proportional_variance_identity",
    "region_index",
    "rejection_attempt",
    "resolution",
    "run_occlusion",
    "seed_stream",
    "stratified_estimate",
    "variance_dominance_check",
]

__version__ = "0.1.0"
