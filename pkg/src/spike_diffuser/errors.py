"""Errors shared across modules that don't belong to the autodiff engine."""


class FormatError(ValueError):
    """An artifact file is malformed, truncated, or has the wrong version."""


class ConfigError(ValueError):
    """Invalid configuration value or file."""
