"""Exception types shared across the package."""


class HyhtmError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HyhtmError):
    """Invalid or unusable configuration (bad values, unreadable resource files)."""


class CorpusError(HyhtmError):
    """Corpus-level input problem, e.g. no usable documents after filtering."""


class EmbeddingParseError(HyhtmError):
    """Malformed embedding file; carries the offending line number."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"{message} (line {line_number})"
        super().__init__(message)
        self.line_number = line_number


class ShapeError(HyhtmError):
    """Dimension mismatch between matrices or vectors."""


class ContractError(HyhtmError):
    """A data contract between pipeline stages was violated."""


class InvariantError(HyhtmError):
    """An internal invariant failed; indicates a bug, not a user error."""


class DegenerateCorpusError(HyhtmError):
    """Corpus too small or too empty for the requested operation."""
