"""Exception taxonomy shared across the harness.

Exit-code mapping used by the CLI: UsageError -> 1, DataError -> 2,
ExplainerError -> 3.
"""


class FocusBenchError(Exception):
    pass


class UsageError(FocusBenchError):
    pass


class DataError(FocusBenchError):
    pass


class ExplainerError(FocusBenchError):
    def __init__(self, message: str, exit_code: int | None = None, stderr_tail: str = ""):
        super().__init__(message)
        self.exit_code = exit_code
        self.stderr_tail = stderr_tail


class MapFormatError(DataError):
    """Attribution file rejected; ``code`` identifies the failure class."""

    BAD_MAGIC = "bad_magic"
    TRUNCATED = "truncated_payload"
    SIZE_MISMATCH = "size_mismatch"
    RESERVED_NONZERO = "reserved_nonzero"
    NON_FINITE = "non_finite_relevance"

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
