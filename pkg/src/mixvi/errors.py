"""Exception types raised by mixvi."""


class MixviError(Exception):
    """Base class for all library errors."""


class DomainError(MixviError, ValueError):
    """Argument outside the mathematical domain of a function."""


class NotPositiveDefiniteError(MixviError, ValueError):
    """Cholesky factorisation hit a non-positive pivot."""


class DimensionMismatchError(MixviError, ValueError):
    pass


class DatasetValidationError(MixviError, ValueError):
    """Raised with the complete list of dataset violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DegenerateColumnError(MixviError, ValueError):
    pass


class NumericalDegeneracyError(MixviError, ArithmeticError):
    pass


class ComponentEmptyError(MixviError, ValueError):
    pass


class ConfigurationError(MixviError, ValueError):
    pass
