"""
Exception types raised by the EMS audit pipeline.

Every exception derives from ``EmsAuditError`` so the CLI can map stage
failures to exit code 1 without swallowing programming errors.
"""

from __future__ import annotations


class EmsAuditError(Exception):
    """Base class for pipeline failures."""


class RecordParseError(EmsAuditError):
    """Raised when a case-record line cannot be parsed."""

    def __init__(self, line_number: int, field: str | None, message: str):
        location = f"line {line_number}"
        if field:
            location += f", field '{field}'"
        super().__init__(f"{location}: {message}")
        self.line_number = line_number
        self.field = field


class GazetteerError(EmsAuditError):
    """Raised for malformed gazetteer or override files."""

    def __init__(self, message: str, line_number: int | None = None):
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(f"{prefix}{message}")
        self.line_number = line_number


class ProtocolRulesError(EmsAuditError):
    """Raised when a protocol rules file is inconsistent."""


class EmptyTrainingSetError(EmsAuditError):
    """Raised when training is requested on zero sentences."""

    def __init__(self):
        super().__init__("empty training set")


class CheckpointError(EmsAuditError):
    """Raised when a model checkpoint cannot be decoded."""


class SyntheticCorpusError(EmsAuditError):
    """Raised when the synthetic generator cannot build a report."""
