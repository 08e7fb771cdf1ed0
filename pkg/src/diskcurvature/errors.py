"""Exception hierarchy."""


class CurvatureError(Exception):
    """Base class for every error raised by this package."""


class ShapeMismatch(CurvatureError, ValueError):
    pass


class DegenerateCurvature(CurvatureError, ValueError):
    pass


class NonPositiveLambda(CurvatureError, ValueError):
    pass


class ResolutionNotDivisible(CurvatureError, ValueError):
    pass


class NegativeEps(CurvatureError, ValueError):
    pass


class DeficitNotAboveOne(CurvatureError, ValueError):
    pass


class PoleInsideClosure(CurvatureError, ValueError):
    pass


class MuNotAboveOne(CurvatureError, ValueError):
    pass


class ImageLeavesDisk(CurvatureError, ValueError):
    pass


class OutOfRange(CurvatureError, ValueError):
    pass


class UnderResolved(CurvatureError, ValueError):
    """The grid cannot resolve a bubble boundary layer.

    ``required`` holds the smallest resolution that would be accepted.
    """

    def __init__(self, message, required):
        super().__init__(message)
        self.required = required


class SingularJacobian(CurvatureError, RuntimeError):
    """Newton linear solve failed; ``record`` carries the last iterate."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class PathCollapse(CurvatureError, RuntimeError):
    pass


class EigSolverFailure(CurvatureError, RuntimeError):
    pass


class ConfigError(CurvatureError, ValueError):
    pass
