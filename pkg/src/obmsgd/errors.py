"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 2,
numerical failures with 3, and I/O errors (plain OSError) with 4.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class NumericalError(RuntimeError):
    """Non-finite state or a numerically impossible quantity was produced."""
