"""Exception types shared across the package.

Errors fall in two groups: structured input rejections (parameter region,
config) and runtime signals from the numerical kernels (vacuum crossing,
failed brackets, non-finite states).  Integrators that are expected to hit
their stopping criteria in normal use report a ``stop_reason`` string on the
run object instead of raising.
"""

from __future__ import annotations


class JeansLabError(Exception):
    """Base class for all package errors."""


class OutOfRegion(JeansLabError):
    """Parameter tuple violates the admissible region.

    ``which`` names the violated inequality, e.g. ``"a>1"`` or ``"k-upper"``.
    """

    def __init__(self, which: str, detail: str = ""):
        self.which = which
        super().__init__(f"parameter region violated: {which}" + (f" ({detail})" if detail else ""))


class DomainError(JeansLabError):
    """Argument outside the mathematical domain of an operation."""


class NoSignChange(JeansLabError):
    """Bracket expansion hit its cap without finding a sign change."""


class NonPositiveEigenvalue(JeansLabError):
    """A coefficient eigenvalue that must be positive is not."""


class NonFiniteState(JeansLabError):
    """A state or derivative evaluated to inf/nan."""


class InsufficientTail(JeansLabError):
    """Too few qualifying samples for the blowup-time extrapolation."""


class OutOfRange(JeansLabError):
    """Query point outside the range covered by a trajectory."""


class VacuumCrossing(JeansLabError):
    """The density 1 + rho dropped to zero somewhere: the perturbative
    regime was left and the model is no longer valid."""


class RDenominatorVanishes(JeansLabError):
    """The rational remainder denominator 1 + 1/f + u is not bounded away
    from zero."""


class EpsTooLarge(JeansLabError):
    """Eigenvalue-band half width must lie in (0, min of the limit
    eigenvalues)."""


class StepUnderflow(JeansLabError):
    """Adaptive controller drove the step below the underflow threshold."""


class ConfigError(JeansLabError):
    """Malformed or unknown configuration content."""
