"""Exception types raised across the package."""


class ZofoError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ZofoError, ValueError):
    """Inconsistent dimensions or malformed configuration."""


class ModelInvalidError(ZofoError, ValueError):
    """The plant model violates a structural requirement (e.g. singular I - A)."""


class InvalidParameterError(ZofoError, ValueError):
    """An algorithm parameter is outside its admissible range."""


class DegenerateObjectiveError(ZofoError, ValueError):
    """The reduced objective has no unique minimizer."""


class InvalidComparisonError(ZofoError, ValueError):
    """Two gradient estimates cannot be compared (different direction or delta)."""


class EmptySeriesError(ZofoError, ValueError):
    """A plant-step budget too small to complete a single controller update."""


class ExperimentError(ZofoError, RuntimeError):
    """A sub-run of an experiment failed; carries method and seed context."""

    def __init__(self, method, seed, cause):
        self.method = method
        self.seed = seed
        self.cause = cause
        super().__init__(f"run failed for method={method} seed={seed}: {cause}")

    def __reduce__(self):
        return type(self), (self.method, self.seed, self.cause)
