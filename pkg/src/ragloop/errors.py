"""Exception taxonomy shared across the engine."""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(EngineError):
    """Invalid configuration or parameters (bad chunking policy, k < 1, missing endpoint)."""


class ValidationError(EngineError):
    """Malformed domain input, such as an empty caption or an empty query."""


class ManifestError(ValidationError):
    """Problem in a line-oriented input file (manifest, query set, overrides);
    carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class IntegrityError(EngineError):
    """Data that cannot be reconciled: dimension/model mismatch, empty model output."""


class ConflictError(EngineError):
    """Duplicate identifier where uniqueness is required."""


class DomainError(EngineError):
    """Mathematically undefined request (zero-vector cosine, empty relevant set)."""


class TransportError(EngineError):
    """Backend unreachable or timed out; the call is safe to retry."""


class ExtractionError(EngineError):
    """Model output did not match the expected labeled-section format."""

    def __init__(self, message: str, raw_output: str = ""):
        self.raw_output = raw_output
        super().__init__(message)


class StoreFormatError(EngineError):
    """Vector store file unreadable: bad magic or header."""


class StoreVersionError(StoreFormatError):
    """Vector store file written by an incompatible format version."""

    def __init__(self, found: int, expected: int):
        self.found = found
        self.expected = expected
        super().__init__(f"store version {found}, expected {expected}")


class StoreChecksumError(StoreFormatError):
    """Vector store file truncated or corrupted (checksum mismatch)."""
