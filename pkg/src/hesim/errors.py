"""Exceptions that map onto CLI exit codes."""


class ConfigError(ValueError):
    """Bad or inconsistent run configuration (exit code 2)."""


class NumericalError(RuntimeError):
    """A computation left its valid numerical regime (exit code 3)."""
