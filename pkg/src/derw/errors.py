"""Exception types raised across the package."""


class DomainError(ValueError):
    """A closed-form quantity was requested outside its domain."""


class RegimeError(ValueError):
    """The parameters do not satisfy the regime a check requires."""


class BudgetError(RuntimeError):
    """A run would exceed a configured memory or step cap."""


class DiagnosticsMissing(ValueError):
    """Per-step diagnostics were needed but not recorded."""
