"""Exception hierarchy.

Every error raised on purpose by the library derives from ``QrevError``.
Configuration errors carry a short string ``code`` so callers (and the CLI)
can tell the failure classes apart.
"""


class QrevError(Exception):
    """Base class for all library errors."""


class ShapeError(QrevError, ValueError):
    """Operands have incompatible dimensions."""


class DomainError(QrevError, ValueError):
    """Input is outside the mathematical domain (e.g. non-Hermitian)."""


class NegativityError(QrevError, ValueError):
    """A matrix expected to be positive semidefinite has a negative eigenvalue."""


class NumericalError(QrevError, RuntimeError):
    """Base class for failures detected during a numerical computation."""


class IntegratorInstabilityError(NumericalError):
    """The time stepper produced an unphysical state.

    ``suggested_dt`` holds a step size that is likely to work.
    """

    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class ReferenceDegeneracyError(NumericalError):
    """A reference state is rank deficient."""


class OutOfRangeError(QrevError, ValueError):
    """Requested time lies outside a stored trajectory."""


class GridMismatchError(QrevError, ValueError):
    """Fields live on different grids, or a grid does not fit an operator."""


class ResolutionError(NumericalError):
    """A field is under-resolved on its grid (aliasing detected)."""


class DerivativeUnavailableError(QrevError, ValueError):
    """Derivatives of a symbol cannot be obtained reliably."""


class StepSizeError(NumericalError):
    """Time step violates the stability bound of an explicit scheme."""


class DivergenceError(NumericalError):
    """A stochastic trajectory became non-finite."""


class PSDViolationError(NumericalError):
    """A diffusion matrix is not positive semidefinite."""


class SamplingError(NumericalError):
    """Monte-Carlo statistics are insufficient for the requested estimate."""


class InsufficientSweepError(QrevError, ValueError):
    """Parameter sweep has too few or repeated points."""


class ConfigError(QrevError):
    code = "config"


class MissingConfigError(ConfigError):
    code = "missing-file"


class ConfigSyntaxError(ConfigError):
    code = "syntax"

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class UnknownKeyError(ConfigError):
    code = "unknown-key"

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ConstraintError(ConfigError):
    code = "constraint"

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ThresholdError(QrevError):
    """A computed metric exceeded its configured threshold."""
