"""Exception hierarchy shared by all kinetic modules.

Every error carries the name of the operation that raised it so the CLI can
report the failing step. ``ValidationError`` subclasses map to exit code 2,
``NumericalError`` subclasses to exit code 3.
"""

from __future__ import annotations


class KineticError(Exception):
    """Base class; ``op`` names the failing operation."""

    def __init__(self, message: str, op: str | None = None):
        super().__init__(message)
        self.op = op

    def __str__(self) -> str:
        msg = super().__str__()
        return f"{self.op}: {msg}" if self.op else msg


class ValidationError(KineticError):
    """Bad input or configuration."""


class NumericalError(KineticError):
    """A computation failed or could not meet its tolerance."""


# distributions
class NonFiniteDensity(NumericalError):
    pass


class DegenerateDirection(ValidationError):
    pass


class OutOfGrid(ValidationError):
    pass


# pointprocess
class OverflowingCount(ValidationError):
    pass


class SupportEscapesBall(ValidationError):
    pass


# potentials
class SingularOrigin(NumericalError):
    pass


class DivergentTransform(NumericalError):
    pass


# forcefield
class ParticleOverlap(NumericalError):
    pass


class StepTooCoarse(ValidationError):
    pass


class NonIntegrableKernel(NumericalError):
    pass


# dielectric
class OutsideAnalyticStrip(ValidationError):
    pass


class GridTooCoarse(NumericalError):
    pass


class AtPole(NumericalError):
    pass


class AtDielectricZero(NumericalError):
    pass


class UnstableMedium(NumericalError):
    pass


class InversionNotConverged(NumericalError):
    pass


# coefficients
class SingularRelativeVelocity(NumericalError):
    pass


# langevin
class NonPSDDiffusion(NumericalError):
    pass


class ClosureBreakdown(NumericalError):
    pass


class EnergyDriftExceeded(NumericalError):
    pass


class BudgetExceeded(ValidationError):
    pass
