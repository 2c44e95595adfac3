"""Exception types raised across the package.

Every numeric failure derives from :class:`NumericFailure` so the CLI can map
it to a single exit code; input problems derive from :class:`InputError`.
"""
from __future__ import annotations


class NonholoError(Exception):
    """Base class for all package errors."""


class InputError(NonholoError):
    """Malformed user input (expressions, scene files, arguments)."""


class NumericFailure(NonholoError):
    """A computation could not complete (singular systems, budgets, ...)."""


class ExprSyntaxError(InputError, ValueError):
    def __init__(self, message: str, text: str, pos: int, expected: str | None = None):
        self.text = text
        self.pos = pos
        self.expected = expected
        detail = f"{message} at position {pos}"
        if expected:
            detail += f" (expected {expected})"
        super().__init__(detail)


class UnknownIdentifier(InputError, ValueError):
    def __init__(self, name: str, pos: int):
        self.name = name
        self.pos = pos
        super().__init__(f"unknown identifier {name!r} at position {pos}")


class DomainError(NumericFailure, ArithmeticError):
    """Expression evaluated outside its domain (ln/sqrt of negatives, 1/0, overflow)."""


class NotTangent(NumericFailure):
    pass


class DegenerateForm(NumericFailure):
    pass


class NoConvergence(NumericFailure):
    def __init__(self, message: str, history=()):
        self.history = list(history)
        super().__init__(message)


class NotClosed(NumericFailure):
    pass


class TangencyLoss(NumericFailure):
    pass


class RankDeficient(NumericFailure):
    pass


class OffPath(NumericFailure):
    pass


class MismatchBug(NonholoError, AssertionError):
    """Internal consistency check failed; indicates a bug, not bad input."""


class RescaleSingular(NumericFailure):
    pass


class SupremumUnstable(NumericFailure):
    def __init__(self, message: str, estimates=()):
        self.estimates = list(estimates)
        super().__init__(message)


class TransversalityLost(NumericFailure):
    pass


class TubeExit(NumericFailure):
    pass


class NoReturn(NumericFailure):
    pass


class SectionDegenerate(NumericFailure):
    pass


class StepCollapse(NumericFailure):
    pass


class FieldError(NumericFailure):
    pass


class InsufficientSamples(NumericFailure):
    pass


class ChartUnavailable(NumericFailure):
    pass


class SceneSchemaError(InputError):
    pass


class AssumptionViolated(NonholoError):
    """A construction was asked for on a scene that fails the standing assumptions."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)
