"""Exception hierarchy.  Every pipeline failure carries the stage that raised it."""


class PipelineError(Exception):
    stage = "unknown"
    exit_code = 1

    def __init__(self, message="", stage=None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage


class InvalidData(PipelineError, ValueError):
    stage = "radial_core"


class NoHorizon(PipelineError):
    stage = "radial_core"


class AsymptoticMismatch(PipelineError):
    stage = "radial_core"


class BlowupEscape(PipelineError):
    stage = "jang_solver"


class DecayViolation(PipelineError):
    stage = "jang_solver"


class CapOutOfRange(PipelineError, ValueError):
    stage = "conformal_energy"


class SolveFailure(PipelineError):
    stage = "conformal_energy"


class NonPositive(PipelineError):
    stage = "conformal_energy"


class DegenerateDenominator(PipelineError, ZeroDivisionError):
    stage = "conformal_energy"


class BoundViolation(PipelineError):
    stage = "conformal_energy"
    exit_code = 2


class JangResidualError(PipelineError):
    stage = "jang_solver"
