"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: configuration problems -> 2,
integration failures -> 3, invariant violations -> 4, inadmissible
counterexample parameters -> 5.
"""

from __future__ import annotations


class PmflowError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(PmflowError):
    """Invalid user-supplied configuration or arguments."""


class WindowError(ConfigurationError):
    """Bi-Lipschitz window degenerates (lambda0 <= 0); shrink sigma0."""


class IntegrationError(PmflowError):
    """Time integration could not be completed."""

    def __init__(self, message: str, *, t: float | None = None,
                 step: float | None = None, detail: dict | None = None):
        super().__init__(message)
        self.t = t
        self.step = step
        self.detail = detail or {}


class StiffnessError(IntegrationError):
    """Accepted step size underflowed (below 1e-15)."""


class DivergenceError(IntegrationError):
    """State became non-finite during integration."""


class InvariantViolation(PmflowError):
    """A theorem-backed invariant failed outside tolerance."""

    def __init__(self, message: str, *, report=None):
        super().__init__(message)
        self.report = report


class AdmissibilityError(ConfigurationError):
    """Counterexample parameter ladder is inadmissible for the requested n.

    Carries the names of the violated inequalities so callers can surface
    which of the four smallness conditions failed.
    """

    def __init__(self, message: str, failed_conditions: list[str]):
        super().__init__(message)
        self.failed_conditions = list(failed_conditions)
