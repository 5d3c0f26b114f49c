"""Fan-beam CT simulation and diffusion-bridge reconstruction.

The package covers the full desk-scale experiment loop: phantom, fan-beam
projection, incomplete-data extraction, counting noise, FBP, and a bridge
sampler that walks from the corrupted FBP image back to a reconstruction
while repeatedly re-anchoring to the measured projections.
"""

from .errors import ConfigError, DomainError, NumericError
from .schedule import Schedule, TimeGrid, make_time_grid, schedule_eval

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DomainError",
    "NumericError",
    "Schedule",
    "TimeGrid",
    "make_time_grid",
    "schedule_eval",
    "__version__",
]
