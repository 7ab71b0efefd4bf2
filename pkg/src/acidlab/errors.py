"""Exception types shared across the package."""

from __future__ import annotations


class AcidLabError(Exception):
    """Base class for all package errors."""


class InvalidParameter(AcidLabError, ValueError):
    pass


class DegenerateDenominator(AcidLabError, ArithmeticError):
    pass


class UndefinedThreshold(AcidLabError, ValueError):
    pass


class NoCertificate(AcidLabError):
    """No positive-definiteness certificate exists for the requested regime.

    ``stage`` names the search step that came up empty: ``"beta"`` for the
    overlap of the two quadratic windows, ``"eta"`` for the determinant window,
    ``"delta"`` for the homogeneous-tumor weight, ``"minors"`` when rounding
    left a non-positive leading minor.
    """

    def __init__(self, message: str, stage: str):
        super().__init__(message)
        self.stage = stage


class NonpositiveDensity(AcidLabError, ValueError):
    pass


class NonpositiveComponent(AcidLabError, ValueError):
    pass


class BoundViolation(AcidLabError):
    """A discrete solution left the invariant region of the continuous model."""

    def __init__(self, component: str, cell: int, value: float, bound: str, t: float):
        super().__init__(
            f"{component}[{cell}] = {value!r} violates {bound} at t = {t:.6g}"
        )
        self.component = component
        self.cell = cell
        self.value = value
        self.bound = bound
        self.t = t

    def payload(self) -> dict:
        return {
            "component": self.component,
            "cell": self.cell,
            "value": self.value,
            "bound": self.bound,
            "t": self.t,
        }


class OrderingViolation(AcidLabError, ValueError):
    pass


class EmptySeries(AcidLabError, ValueError):
    pass


class ParallelLines(AcidLabError):
    pass
