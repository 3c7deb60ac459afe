"""Exception hierarchy shared by every layer."""


class MiGuardError(Exception):
    """Base class for all toolkit errors."""


class InvalidParameterError(MiGuardError, ValueError):
    """A precondition on an argument was violated."""


# ============================================================================
# Data
# ============================================================================

class DatasetError(MiGuardError):
    """A dataset could not be built or is unusable for the requested step."""


class DatasetParseError(DatasetError):
    """A CSV row could not be parsed."""

    def __init__(self, row: int, reason: str):
        self.row = row
        super().__init__(f"row {row}: {reason}")


class LabelRangeError(DatasetError):
    """A label is outside [0, C)."""

    def __init__(self, row: int, label: int, num_classes: int):
        self.row = row
        super().__init__(f"row {row}: label {label} outside [0, {num_classes})")


# ============================================================================
# Training
# ============================================================================

class DivergenceError(MiGuardError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch}")


# ============================================================================
# Victim access
# ============================================================================

class DefenseError(MiGuardError):
    """A defended victim refused a request (e.g. posterior under argmax)."""


class QueryBudgetExceededError(DefenseError):
    """The DP-Logits query budget q was exhausted."""


# ============================================================================
# Configuration / pipeline
# ============================================================================

class ConfigValidationError(MiGuardError):
    """The experiment configuration is invalid; lists every violation."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        joined = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"{len(self.violations)} configuration violation(s):\n{joined}")


class StageError(MiGuardError):
    """A pipeline stage failed."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
