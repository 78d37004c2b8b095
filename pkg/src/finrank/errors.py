"""Exception types shared across the package."""


class FinrankError(Exception):
    """Base class for all errors raised by this package."""


class DataFormatError(FinrankError):
    """A data file violates its expected format.

    Carries the offending file and 1-based line number when known.
    """

    def __init__(self, message, path=None, line_no=None):
        detail = message
        if path is not None:
            where = str(path) if line_no is None else f"{path}:{line_no}"
            detail = f"{where}: {message}"
        super().__init__(detail)
        self.path = path
        self.line_no = line_no


class DanglingIdError(DataFormatError):
    """Relevance judgments reference ids that do not resolve."""

    def __init__(self, message, ids, path=None):
        super().__init__(f"{message}: {', '.join(sorted(ids))}", path=path)
        self.ids = sorted(ids)


class BadMagicError(FinrankError):
    """A binary file does not start with the expected magic bytes."""


class UnsupportedVersionError(FinrankError):
    """A binary file declares a format version this code cannot read."""


class TruncatedFileError(FinrankError):
    """A binary file ended before all declared content was read."""


class VocabularyMismatchError(FinrankError):
    """A checkpoint was produced under a different vocabulary."""


class NumericalError(FinrankError):
    """A numerical invariant was violated (NaN/Inf in a computation)."""
