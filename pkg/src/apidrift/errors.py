"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when inputs violate a documented contract."""


class UnknownCategoryError(ValidationError):
    """An observation used an API label that is not part of the category space.

    The offending label is kept on the ``label`` attribute so callers can
    report exactly which name was unexpected.
    """

    def __init__(self, label):
        self.label = label
        super().__init__(f"unknown API label: {label!r}")


class ParseError(ValidationError):
    """A log line could not be parsed; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class SnapshotError(ValueError):
    """Detector snapshot bytes are corrupt or from an unsupported version."""
