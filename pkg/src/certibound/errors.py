"""Exception types shared across the package."""


class CertiboundError(Exception):
    """Base class for all library-specific errors."""


class InvalidAddressError(CertiboundError, ValueError):
    """A tree address is malformed: bad child index, or depth past the limit."""


class TreeStructureError(CertiboundError, ValueError):
    """A labeled tree violates regularity (missing siblings or ancestors)."""


class EvaluationError(CertiboundError, RuntimeError):
    """g returned a non-finite value or raised during refinement.

    Carries the partial evaluation log accumulated before the failure in
    ``eval_log`` so callers can inspect or replay what was computed.
    """

    def __init__(self, message, eval_log=()):
        super().__init__(message)
        self.eval_log = tuple(eval_log)


class CapabilityError(CertiboundError, NotImplementedError):
    """The measure model does not support the requested operation."""


class DegenerateConditioningError(CertiboundError, ValueError):
    """Conditioning on a zero-probability cube."""


class DegenerateDensityError(CertiboundError, RuntimeError):
    """The target density appears to vanish on the sampling cube."""


class InvalidChainStateError(CertiboundError, ValueError):
    """A Markov chain state has zero target density."""


class IncompleteStatsError(CertiboundError, KeyError):
    """Sample statistics are missing for a vertex on a requested leaf path."""


class OracleConvergenceError(CertiboundError, RuntimeError):
    """Grid integration hit its cell cap before meeting the tolerance.

    ``last_two`` holds the final pair of iterates for inspection.
    """

    def __init__(self, message, last_two):
        super().__init__(message)
        self.last_two = tuple(last_two)


class ConfigError(CertiboundError, ValueError):
    """A run configuration failed validation."""

    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)
