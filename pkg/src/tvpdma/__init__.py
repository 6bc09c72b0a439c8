"""Dynamic model averaging over discount-factor linear regressions."""
from .backtest import backtest, pld
from .data import Dataset, Design, DesignSpec, build_design, lag, load_csv, write_csv
from .dlm import PriorKind, PriorSpec
from .engine import DmaConfig, DmaEngine, DmaOutput, run_dma
from .errors import CapacityError, ConfigError, DataError, DmaError, NumericError
from .models import KITCHEN_SINK, ModelSpace, enumerate_models
from .simulate import SimSpec, simulate_dlm

__all__ = [
    "backtest", "pld", "Dataset", "Design", "DesignSpec", "build_design", "lag", "load_csv",
    "write_csv", "PriorKind", "PriorSpec", "DmaConfig", "DmaEngine", "DmaOutput", "run_dma",
    "CapacityError", "ConfigError", "DataError", "DmaError", "NumericError", "KITCHEN_SINK",
    "ModelSpace", "enumerate_models", "SimSpec", "simulate_dlm",
]
