"""
RADIOFORGE - Synthetic multi-transmitter RF datasets with complete ground truth.
"""

__version__ = "0.1.0"

# Export main functions
from .config import MasterConfig, load_config, sample_scenario
from .core import run_batch, synthesize_frame
from .registry import list_registry

__all__ = [
    "MasterConfig",
    "load_config",
    "sample_scenario",
    "synthesize_frame",
    "run_batch",
    "list_registry",
    "exporters",
]
