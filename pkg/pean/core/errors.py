"""Exception hierarchy shared by every PEAN layer.

Each subclass carries the process exit status the CLI reports for it, so a
failure class always maps to the same nonzero code.
"""

from __future__ import annotations


class PeanError(Exception):
    """Base class for all library errors."""

    exit_code: int = 1


class ConfigError(PeanError):
    exit_code = 2


class CharsetError(PeanError):
    exit_code = 2


class ShapeError(PeanError):
    exit_code = 2


class PriorSourceError(PeanError):
    exit_code = 2


class ScheduleError(PeanError):
    exit_code = 2


class CTCError(PeanError):
    exit_code = 2


class LossError(PeanError):
    exit_code = 2


class MetricError(PeanError):
    exit_code = 2


class MissingPrerequisiteError(PeanError):
    """A stage was asked to run before the artifact it depends on exists."""

    exit_code = 3


class CheckpointError(PeanError):
    """Checkpoint unreadable or incompatible with the model it is loaded into."""

    exit_code = 3

    def __init__(self, message: str, problems: list[str] | None = None) -> None:
        self.problems = list(problems or [])
        if self.problems:
            message = message + "\n  " + "\n  ".join(self.problems)
        super().__init__(message)


class DatasetError(PeanError):
    exit_code = 4


class TrainingDivergedError(PeanError):
    exit_code = 5

    def __init__(self, message: str, last_good_checkpoint: str | None = None) -> None:
        super().__init__(message)
        self.last_good_checkpoint = last_good_checkpoint


class ArmUnavailableError(PeanError):
    """The auxiliary recognition head only exists while training."""

    exit_code = 6


class GradCheckError(PeanError):
    exit_code = 7
