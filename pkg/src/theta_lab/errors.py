"""Exception hierarchy shared by every module."""


class ThetaLabError(Exception):
    """Base class for all library errors."""


class NonConvergent(ThetaLabError):
    """A series was requested outside its disk of convergence."""


class ToleranceUnreachable(ThetaLabError):
    """The requested tolerance needs more terms than the configured cap."""


class ScaleOverflow(ThetaLabError):
    """A prefactor is too large for the working precision to resolve."""


class DegenerateInput(ThetaLabError):
    pass


class DegreeTooLarge(ThetaLabError):
    pass


class NonConvergence(ThetaLabError):
    """Iterative root finding did not settle within its iteration budget."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class Diverged(ThetaLabError):
    pass


class SingularJacobian(ThetaLabError):
    pass


class LabelAmbiguity(ThetaLabError):
    pass


class PathCollision(ThetaLabError):
    pass


class StepUnderflow(ThetaLabError):
    pass


class DegenerateSingularity(ThetaLabError):
    pass


class MatchFailure(ThetaLabError):
    pass


class NoMatchInWindow(ThetaLabError):
    pass


class LeftWindow(ThetaLabError):
    pass


class PrecisionExhausted(ThetaLabError):
    pass


class HypothesisFailed(ThetaLabError):
    pass
