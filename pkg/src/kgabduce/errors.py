"""Exception taxonomy shared across the package.

Every error a caller is expected to catch derives from :class:`KgabduceError`
so the CLI can turn any failure into a single machine-readable JSON envelope.
"""

from __future__ import annotations


class KgabduceError(Exception):
    """Base class for all package errors."""

    kind = "error"

    def to_json(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class TripleParseError(KgabduceError):
    """A triple file line that cannot be parsed. Carries the 1-based line number."""

    kind = "triple-parse"

    def __init__(self, message: str, line_no: int | None = None) -> None:
        super().__init__(message if line_no is None else f"line {line_no}: {message}")
        self.line_no = line_no


class GraphFormatError(KgabduceError):
    """A graph directory or manifest that does not match the expected layout."""

    kind = "graph-format"


class InvalidHypothesisError(KgabduceError):
    """A hypothesis graph that fails structural validation."""

    kind = "invalid-hypothesis"

    def __init__(self, violations: list[str]) -> None:
        super().__init__("; ".join(violations) or "invalid hypothesis")
        self.violations = violations


class ForeignSymbolError(KgabduceError):
    """An entity or relation id that does not exist in the graph being queried."""

    kind = "foreign-symbol"


class ActionParseError(KgabduceError):
    """An action sequence that does not decode to a valid hypothesis.

    ``reason`` is a stable machine-readable tag: one of ``unknown-token``,
    ``unexpected-token``, ``empty``, ``incomplete``, ``trailing-tokens``,
    ``malformed``.
    """

    kind = "action-parse"

    def __init__(self, reason: str, message: str) -> None:
        super().__init__(message)
        self.reason = reason


class OracleBudgetError(KgabduceError):
    """Brute-force evaluation would enumerate too many assignments."""

    kind = "oracle-budget"


class SamplingError(KgabduceError):
    """Pair sampling exhausted its retry budget or the pattern is unsatisfiable."""

    kind = "sampling"


class VocabularyError(KgabduceError):
    """Token collisions or a malformed vocabulary file."""

    kind = "vocabulary"
