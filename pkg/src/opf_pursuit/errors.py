"""Exception types raised across the package."""


class OPFError(Exception):
    """Base class for all package errors."""


class CaseFormatError(OPFError, ValueError):
    """A case or scenario file could not be parsed.

    ``location`` names the line/column or the field path that failed.
    """

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        text = f"{location}: {message}" if location else message
        super().__init__(text)


class ValidationError(OPFError, ValueError):
    """Model data violate one or more invariants."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DomainError(OPFError, ValueError):
    """Inputs lie outside the domain of a formula."""


class UnboundedSubproblemError(OPFError, ArithmeticError):
    """A univariate restriction has no minimizer on its interval."""


class NumericalError(OPFError, ArithmeticError):
    """A non-finite value appeared during evaluation."""
