"""Shared exception types."""


class BeamsimError(Exception):
    """Base class for all simulator errors."""


class ConfigurationError(BeamsimError):
    """Invalid configuration or scenario parameters."""


class DomainError(BeamsimError):
    """Operation called outside its mathematical domain."""
