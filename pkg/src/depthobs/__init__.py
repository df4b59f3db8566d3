"""Dense depth estimation from a monocular image sequence with known camera
motion: Horn-Schunck flow, a rotation-invariant variational inverse-depth
solver and two asymptotic depth observers, plus a synthetic test bench."""

from .config import ExperimentConfig, parse_config, preset
from .flow import DerivativeStack, FlowField, HsConfig, horn_schunck, hs_cost, spatial_derivatives
from .geometry import MotionCoeffs, MotionSample, PixelGrid, Pose, motion_coeffs, predicted_flow
from .metrics_io import ErrorReport, global_error, linf_error, lp_error
from .observers import ObserverConfig, observer_flow_step, observer_gamma_step, run_observer
from .scene import SceneModel, SyntheticSequence, TextureSpec, TrajectorySpec, generate_sequence
from .variational import DataTerms, VarConfig, cost_J, data_terms, solve_gamma

__all__ = [
    "DataTerms", "DerivativeStack", "ErrorReport", "ExperimentConfig", "FlowField", "HsConfig",
    "MotionCoeffs", "MotionSample", "ObserverConfig", "PixelGrid", "Pose", "SceneModel",
    "SyntheticSequence", "TextureSpec", "TrajectorySpec", "VarConfig", "cost_J", "data_terms",
    "generate_sequence", "global_error", "horn_schunck", "hs_cost", "linf_error", "lp_error",
    "motion_coeffs", "observer_flow_step", "observer_gamma_step", "parse_config", "predicted_flow",
    "preset", "run_observer", "solve_gamma", "spatial_derivatives",
]
