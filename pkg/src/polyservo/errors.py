"""Exception types shared across the package."""


class PolyServoError(Exception):
    """Base class for all package-specific errors."""


class DegenerateArea(PolyServoError):
    """Polygon area is at or below the degeneracy guard."""


class AngleSingularity(PolyServoError):
    """Reference-angle denominator is at or below the singularity guard."""


class StepDegeneracy(PolyServoError):
    """A propagation step produced a degenerate polygon."""


class DegenerateTarget(PolyServoError):
    """A target configuration produces a self-intersecting or flat polygon."""


class BarrierBlowup(PolyServoError):
    """A barrier was evaluated at or past its constraint boundary."""


class InputAtLimit(PolyServoError):
    """A velocity component sits on (or past) its saturation bound."""


class InfeasibleRollout(PolyServoError):
    """A predicted trajectory left the safe set.

    Carries the first offending horizon step in ``step_index``.
    """

    def __init__(self, msg, step_index=None):
        super().__init__(msg)
        self.step_index = step_index


class InfeasibleStart(PolyServoError):
    """The measured state violates the safe set, so no OCP can be posed."""


class TargetLost(PolyServoError):
    """A target vertex left the image during simulation."""


class ShortRun(PolyServoError):
    """A log is too short for the requested statistic."""


class ConfigError(PolyServoError):
    """A scenario or batch configuration file is invalid."""
