"""Joint SPX/VIX calibration by semimartingale optimal transport."""
from .calibrator import (CalibrationConfig, CalibrationError, CalibrationReport, dual_objective,
                         gradients, lbfgs_maximize, reference_measure_iteration, smooth_beta,
                         despike_near_zero)
from .config import ConfigError, ProblemConfig, load_config, save_config
from .estimator import JointCalibrator
from .heston import HestonParams, ReferenceKind, ReferenceSpec, heston_surface, reference_beta
from .hjb import HjbError, solve_hjb_backward
from .lattice import days
from .payoffs import Instrument, InstrumentKind, VixSpec
from .pipeline import PipelineError, run_pipeline
from .pricing import heston_cf_price, model_prices, solve_pricing_pde
from .problem import CalibrationProblem, GridConfig, Multipliers
from .surfaces import DiffusionSurface

__version__ = "0.1.0"

__all__ = [
    "CalibrationConfig", "CalibrationError", "CalibrationProblem", "CalibrationReport",
    "ConfigError", "DiffusionSurface", "GridConfig", "HestonParams", "HjbError", "Instrument",
    "InstrumentKind", "JointCalibrator", "Multipliers", "PipelineError", "ProblemConfig",
    "ReferenceKind", "ReferenceSpec", "VixSpec", "days", "despike_near_zero", "dual_objective",
    "gradients", "heston_cf_price", "heston_surface", "lbfgs_maximize", "load_config",
    "model_prices", "reference_beta", "reference_measure_iteration", "run_pipeline",
    "save_config", "smooth_beta", "solve_hjb_backward", "solve_pricing_pde",
]
