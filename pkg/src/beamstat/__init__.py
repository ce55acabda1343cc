"""Beam-domain channel power estimation for uplink massive MIMO-OFDM."""

from .baseline import MmvProblem, mfocuss, mmv_from_batch
from .channel import BeamPowerMap, ReceiveBatch, simulate_rx, synth_power_map
from .chest import MmseProblem, mmse_estimate, mse_metric
from .fastops import SpectralFactors, build_factors, fast_operator, fast_sandwich
from .manifold import GridSet, build_grids
from .pilots import PilotSet, build_pilot_matrix
from .powerest import (BilinearProblem, EstimatorState, MomentObservation, accumulate_phi,
                       dense_operator, estimate, estimate_flat, kl_gradient, kl_objective,
                       split_per_user)
from .sysmodel import DerivedDims, SystemConfig, derive_dims, validate

__version__ = "0.1.0"

__all__ = [
    "BeamPowerMap", "BilinearProblem", "DerivedDims", "EstimatorState", "GridSet", "MmseProblem",
    "MmvProblem", "MomentObservation", "PilotSet", "ReceiveBatch", "SpectralFactors", "SystemConfig",
    "accumulate_phi", "build_factors", "build_grids", "build_pilot_matrix", "dense_operator",
    "derive_dims", "estimate", "estimate_flat", "fast_operator", "fast_sandwich", "kl_gradient",
    "kl_objective", "mfocuss", "mmse_estimate", "mmv_from_batch", "mse_metric", "simulate_rx",
    "split_per_user", "synth_power_map", "validate",
]
