"""Exception hierarchy. Each class carries a stable ``code`` string."""


class ExflError(Exception):
    code = "EXFL_ERROR"


class NoEquilibrium(ExflError):
    code = "NO_EQUILIBRIUM"


class NumericDivergence(ExflError):
    code = "NUMERIC_DIVERGENCE"

    def __init__(self, msg, t=None):
        super().__init__(msg if t is None else f"{msg} (t={t:.6f} s)")
        self.t = t


class UnstableScenario(ExflError):
    code = "UNSTABLE_SCENARIO"


class InvalidEvents(ExflError):
    code = "INVALID_EVENTS"


class QrefUndefined(ExflError):
    code = "QREF_UNDEFINED"


class EmptyTrace(ExflError):
    code = "EMPTY_TRACE"


class InsufficientRows(ExflError):
    code = "INSUFFICIENT_ROWS"


class DegenerateSplit(ExflError):
    code = "DEGENERATE_SPLIT"


class ConstantSeries(ExflError):
    code = "CONSTANT_SERIES"


class LengthMismatch(ExflError):
    code = "LENGTH_MISMATCH"


class RankDeficient(ExflError):
    code = "RANK_DEFICIENT"


class NoFeatureQualifies(ExflError):
    code = "NO_FEATURE_QUALIFIES"


class DimensionMismatch(ExflError):
    code = "DIMENSION_MISMATCH"


class SingularSystem(ExflError):
    code = "SINGULAR_SYSTEM"


class NoProgress(ExflError):
    code = "NO_PROGRESS"


class SweepEmpty(ExflError):
    code = "SWEEP_EMPTY"


class ConfigError(ExflError):
    code = "CONFIG_ERROR"


class StageFailure(ExflError):
    """A pipeline stage aborted; ``stage`` names it, ``cause`` is the original error."""

    code = "STAGE_FAILURE"

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {getattr(cause, 'code', type(cause).__name__)}: {cause}")
        self.stage = stage
        self.cause = cause
