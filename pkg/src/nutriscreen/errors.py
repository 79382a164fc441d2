"""Exception hierarchy shared across the pipeline.

Exit-code mapping used by the CLI: UsageError -> 1, DataError -> 2,
InternalError (or anything unexpected) -> 3.
"""


class NutriscreenError(Exception):
    """Base class for all package errors."""


class UsageError(NutriscreenError):
    """Bad arguments, unknown flags, inconsistent configuration."""


class DataError(NutriscreenError):
    """Malformed or structurally invalid input data."""

    def __init__(self, message, *, locator=None):
        if locator is not None:
            message = f"{message} (at {locator})"
        super().__init__(message)
        self.locator = locator


class SchemaError(DataError):
    """Artifact/file schema violations (versions, checksums, columns)."""


class StageError(NutriscreenError):
    """Pipeline stage failure; carries the stage tag for diagnostics."""

    def __init__(self, stage, original):
        super().__init__(f"[stage:{stage}] {original}")
        self.stage = stage
        self.original = original


class InternalError(NutriscreenError):
    """Invariant violation inside the library; a bug, not a user error."""
