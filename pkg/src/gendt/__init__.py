"""Digital-twin replay engine.

Organizes multi-run sensor measurements into an observation graph, predicts
the next process-state signal with an ensemble of pluggable forecasters, and
drives a threshold-based feedback control loop over a replayed process.
"""

__version__ = "0.1.0"

from .errors import GendtError

__all__ = ["GendtError", "__version__"]
