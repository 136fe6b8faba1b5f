"""Multi-stream quickest change detection with SUM-shrinkage global schemes."""
import numba

# prefer OpenMP/workqueue; the TBB layer warns on this numba build
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .models import ChangeScenario, SeedSpec, StreamModel, homogeneous  # noqa: E402
from .detectors import LpConfig  # noqa: E402
from .combiners import Monitor, SchemeSpec, ShrinkageSpec, global_stat  # noqa: E402
from .calibration import CalibrationError, CalibrationTarget, calibrate_threshold, estimate_arl  # noqa: E402
from .experiments import ExperimentSpec, run_table, simulate_delay, transmission_fraction  # noqa: E402

__all__ = [
    "ChangeScenario", "SeedSpec", "StreamModel", "homogeneous", "LpConfig", "Monitor",
    "SchemeSpec", "ShrinkageSpec", "global_stat", "CalibrationError", "CalibrationTarget",
    "calibrate_threshold", "estimate_arl", "ExperimentSpec", "run_table", "simulate_delay",
    "transmission_fraction",
]
__version__ = "0.1.0"
