"""Common base class for all errors raised by this package."""


class PlaError(Exception):
    """Base class for domain errors; the CLI maps these to exit code 1."""
