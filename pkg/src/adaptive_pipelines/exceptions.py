"""Exception hierarchy for the package."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for every error raised by this package."""


# model / ingestion
class AllMissing(PipelineError):
    pass


class EmptyBatch(PipelineError):
    pass


class ParseError(PipelineError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InconsistentColumns(ParseError):
    pass


class SchemaMismatch(PipelineError):
    pass


# profiling / errors
class DegenerateRangeWarning(UserWarning):
    """A range assertion was generated for a constant column and had to be widened."""


class NoTrackedPairs(PipelineError):
    pass


# operators
class MissingProperty(PipelineError):
    def __init__(self, name: str, step_id: str | None = None):
        where = f" (step {step_id})" if step_id else ""
        super().__init__(f"missing property {name!r}{where}")
        self.property = name
        self.step_id = step_id


class IncompatibleDtype(PipelineError):
    pass


class InsufficientData(PipelineError):
    pass


class InvalidOperator(PipelineError):
    pass


# optimizer
class UnknownErrorType(PipelineError):
    pass


class EmptySlot(PipelineError):
    def __init__(self, slot, reasons: list[str]):
        super().__init__(f"no applicable algorithm left for slot {slot}: " + "; ".join(reasons))
        self.slot = slot
        self.reasons = reasons


class PinConflict(PipelineError):
    pass


class BudgetZero(PipelineError):
    pass


# pipeline
class StepFailure(PipelineError):
    def __init__(self, step_id: str, cause: Exception):
        super().__init__(f"step {step_id} failed: {type(cause).__name__}: {cause}")
        self.step_id = step_id
        self.cause = cause


# evolution
class InapplicableSMO(PipelineError):
    def __init__(self, index: int, reason: str):
        super().__init__(f"SMO #{index}: {reason}")
        self.index = index
        self.reason = reason


class EdgeInconsistent(PipelineError):
    pass


# adapt
class NothingToInterpret(PipelineError):
    pass


class UnresolvableStep(PipelineError):
    def __init__(self, step_id: str, reason: str):
        super().__init__(f"change step {step_id}: {reason}")
        self.step_id = step_id
        self.reason = reason


class PatchConflict(PipelineError):
    pass


# registry / config / cli
class ProjectExists(PipelineError):
    pass


class ConfigError(PipelineError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class AlreadyExists(PipelineError):
    pass


class ParentMissing(PipelineError):
    pass


class UnknownBatch(PipelineError):
    pass


class SpecError(PipelineError):
    pass
