"""Exception types shared across the package."""


class CookieWalkError(Exception):
    """Base class for all package errors."""


class OutOfRange(CookieWalkError):
    """A cookie strength lies outside [1/2, 1]."""


class LengthMismatch(CookieWalkError):
    """len(p) does not match the declared number of cookies."""


class StepCapExceeded(CookieWalkError):
    """A walk hit the step cap before reaching its target level."""

    def __init__(self, steps, level_reached):
        super().__init__(f"step cap hit after {steps} steps at level {level_reached}")
        self.steps = steps
        self.level_reached = level_reached


class CapTooSmall(CookieWalkError):
    """Truncated support leaks more mass than the configured tolerance."""


class NotPositiveRecurrent(CookieWalkError):
    """The migration chain has no invariant probability (alpha <= 0)."""


class NoConvergence(CookieWalkError):
    """Solver exhausted its budget without meeting tolerance."""


class InsufficientTail(CookieWalkError):
    """Not enough tail mass in the fit window to estimate an exponent."""


class RegimeError(CookieWalkError):
    """Operation called outside its parameter regime."""


class DomainError(CookieWalkError):
    """Function evaluated outside its domain."""


class DegenerateCoefficient(CookieWalkError):
    """A linear solve hit a vanishing coefficient."""
