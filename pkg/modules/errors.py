"""
Error hierarchy shared by every layer (engine, lab, io, CLI).
"""
from typing import Optional


class AttackGuardError(Exception):
    """Base class for all errors raised on purpose by this package."""

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": str(self)}


class RejectedInput(AttackGuardError, ValueError):
    """A precondition of an operation was violated by its input."""


class NoEstimate(AttackGuardError):
    """The window cannot produce statistics yet (empty or warming up)."""


class OrderingError(RejectedInput):
    """Per-card seq_no ordering violated by a record in a stream."""

    def __init__(self, message: str, card_id: str, seq_no: int, index: Optional[int] = None):
        super().__init__(message)
        self.card_id = card_id
        self.seq_no = seq_no
        self.index = index

    def to_dict(self) -> dict:
        out = super().to_dict()
        out.update({"card_id": self.card_id, "seq_no": self.seq_no, "index": self.index})
        return out


class CheckpointError(AttackGuardError):
    """Checkpoint bytes are truncated, corrupt, or of an unknown version."""


class RowParseError(AttackGuardError):
    """A CSV row (or the header) could not be parsed."""

    def __init__(self, message: str, line: int, column: Optional[str] = None):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.column = column

    def to_dict(self) -> dict:
        out = super().to_dict()
        out.update({"line": self.line, "column": self.column})
        return out


class ConfigError(AttackGuardError):
    """Configuration document is missing a value or holds an invalid one."""

    def __init__(self, message: str, key: str):
        super().__init__(f"{key}: {message}")
        self.key = key

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["key"] = self.key
        return out


class SinkError(AttackGuardError, OSError):
    """Writing to an output sink failed."""
