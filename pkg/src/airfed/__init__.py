"""Deterministic simulator for federated learning over wireless channels:
weighted aggregation, gradient compression, over-the-air analog aggregation,
and communication-budget accounting.
"""

from .errors import AirfedError, ConfigurationError, ProtocolError, SchemeError

__all__ = [
    "AirfedError",
    "ConfigurationError",
    "ProtocolError",
    "SchemeError",
]

__version__ = "0.1.0"
