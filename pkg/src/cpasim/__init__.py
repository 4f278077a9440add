"""Coded pilot access for massive MIMO random access: simulation and analysis."""
from ._accel import backend_name
from .analysis import evaluate
from .config import SystemConfig, load_config
from .sic import simulate

__version__ = "0.1.0"

__all__ = ["SystemConfig", "load_config", "simulate", "evaluate", "backend_name", "__version__"]
