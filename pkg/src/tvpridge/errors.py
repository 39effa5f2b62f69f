"""Exception types shared across the package."""


class TvpRidgeError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(TvpRidgeError):
    """Invalid input data (non-finite values, bad parameter ranges)."""


class DimensionError(TvpRidgeError):
    """Shape or length mismatch between related inputs."""


class NumericalError(TvpRidgeError):
    """A linear solve or factorization failed beyond recovery."""


class ResourceError(TvpRidgeError):
    """A requested computation would exceed a configured memory ceiling."""


class ConfigError(TvpRidgeError):
    """Malformed or inconsistent run configuration."""
