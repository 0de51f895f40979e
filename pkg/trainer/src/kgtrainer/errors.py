"""Exception taxonomy for the trainer.

Every error a caller is expected to catch derives from :class:`TrainerError`
so the CLI can turn any failure into one machine-readable JSON envelope.
"""

from __future__ import annotations


class TrainerError(Exception):
    """Base class for all trainer errors."""

    kind = "error"

    def to_json(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class DataError(TrainerError):
    """A vocabulary, manifest, or pair file that does not match its contract."""

    kind = "data"


class VocabularyMismatchError(TrainerError):
    """A checkpoint whose vocabulary disagrees with the data directory's."""

    kind = "vocabulary-mismatch"


class EnvConnectionError(TrainerError):
    """The reward environment became unreachable mid-run."""

    kind = "env-connection"


class DivergedError(TrainerError):
    """A non-finite loss or objective estimate during optimization."""

    kind = "diverged"
