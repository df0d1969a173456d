"""Seedable multi-cell mm-Wave NOMA downlink simulator comparing four user
association / beam-count policies: transfer Q-learning, Q-learning,
best-SINR + DBSCAN, and a fixed-sector heuristic."""

__version__ = "0.1.0"

from .errors import BeamsimError, ConfigurationError, DomainError

__all__ = ["BeamsimError", "ConfigurationError", "DomainError", "__version__"]
