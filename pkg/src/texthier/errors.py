"""Error taxonomy shared by the library, CLI, and service.

The CLI maps these to process exit codes; the HTTP service maps them to
status codes. Keeping one hierarchy means a bad config file fails the same
way no matter which entry point hit it.
"""

from __future__ import annotations


class TextHierError(Exception):
    """Base class for all library errors."""


class ConfigurationError(TextHierError):
    """Invalid profile, config file, or CLI flag combination. Exit code 2."""


class DataError(TextHierError):
    """Missing or malformed dataset/annotation input. Exit code 3."""


class ValidationError(TextHierError):
    """An operation received arguments violating its contract."""


class CheckpointError(TextHierError):
    """Checkpoint archive is malformed or disagrees with its manifest."""


class TrainingAborted(TextHierError):
    """Raised when training hits a non-finite loss; carries the batch id."""

    def __init__(self, message: str, step: int, batch_id: str) -> None:
        super().__init__(message)
        self.step = step
        self.batch_id = batch_id


# CLI exit codes: 0 success, 2 config error, 3 data error, 4 internal error.
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ConfigurationError):
        return EXIT_CONFIG
    if isinstance(exc, DataError):
        return EXIT_DATA
    return EXIT_INTERNAL
