"""Exception hierarchy shared across the package."""


class S3Error(Exception):
    """Base class for every error raised by this package."""


class ValidationError(S3Error):
    """Malformed or inconsistent user input (CLI exit code 1)."""


class PenmanParseError(ValidationError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class AlignmentConflictError(ValidationError):
    pass


class RstValidationError(ValidationError):
    def __init__(self, message, path="root"):
        super().__init__(f"{path}: {message}")
        self.path = path


class TreeDocMismatchError(ValidationError):
    def __init__(self, n_leaves, n_edus):
        super().__init__(f"RST tree has {n_leaves} leaves but document has {n_edus} EDUs")
        self.n_leaves = n_leaves
        self.n_edus = n_edus


class BuildError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class SequenceTooLongError(ValidationError):
    def __init__(self, length, max_len):
        super().__init__(f"input sequence has {length} positions, limit is {max_len}")
        self.length = length
        self.max_len = max_len


class NumericDomainError(S3Error, ValueError):
    pass


class NonDeterministicError(S3Error):
    pass


class IntegrityError(S3Error):
    pass


class GuardViolation(S3Error):
    pass


class TrainingDiverged(S3Error):
    pass
