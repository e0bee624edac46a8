"""Exception and warning types raised across the package."""


class SelfCoolError(Exception):
    """Base class for every error raised by :mod:`selfcool`."""


class ValidationError(SelfCoolError, ValueError):
    """A parameter record was constructed with an out-of-range field."""


class DegenerateInput(SelfCoolError, ValueError):
    pass


class ConfigError(ValidationError):
    """Malformed configuration file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnstableSpring(SelfCoolError, ArithmeticError):
    """Optical spring pushes the squared effective frequency to or below zero."""


class Unstable(SelfCoolError, ArithmeticError):
    """Effective damping is non-positive, so no stationary state exists."""


class GridTooCoarse(SelfCoolError, ValueError):
    pass


class AdiabaticityViolation(SelfCoolError, ValueError):
    pass


class StepTooLarge(SelfCoolError, ValueError):
    pass


class NonFinite(SelfCoolError, ArithmeticError):
    """Integration produced inf/nan; ``state`` holds the last finite state."""

    def __init__(self, message, state=None):
        self.state = state
        super().__init__(message)


class TooShort(SelfCoolError, ValueError):
    pass


class NonUniform(SelfCoolError, ValueError):
    pass


class NoPeak(SelfCoolError, ValueError):
    pass


class SlopeVanishes(SelfCoolError, ZeroDivisionError):
    pass


class InsufficientData(SelfCoolError, ValueError):
    pass


class OutOfBounds(SelfCoolError, ValueError):
    pass


class NodeDivergence(SelfCoolError, ArithmeticError):
    """Probe overlap with the mode vanishes: the effective mass is infinite."""


class Ambiguous(SelfCoolError, ValueError):
    pass


class RegimeWarning(UserWarning):
    """A model is used outside the regime where its approximation holds."""


class NotConvergedWarning(UserWarning):
    pass
