class NcdwError(Exception):
    """
    Base class for every error raised by the warehouse engine.
    Each subclass carries the process exit code the CLI reports for it.
    """
    exit_code = 2


class UsageError(NcdwError):
    """Bad command-line usage"""
    exit_code = 1


class ValidationError(NcdwError):
    """Input data or a request failed validation"""
    exit_code = 2


class StorageError(NcdwError):
    """Reading or writing persistent state failed"""
    exit_code = 3


class RangeError(ValidationError):
    pass


class CapacityError(ValidationError):
    pass


class InvalidNameError(ValidationError):
    pass


class KeyMaterialError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class RecordRejected(ValidationError):
    """
    A single record failed standardization.
    The reason is one of the reject codes written to the rejects sidecar.
    """
    def __init__(self, reason, detail=""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


class UnknownBatchError(ValidationError):
    pass


class IntegrityError(ValidationError):
    pass


class QueryError(ValidationError):
    pass


class SpecError(ValidationError):
    pass


class LatticeError(ValidationError):
    pass


class UndefinedCorrelationError(ValidationError):
    def __init__(self, series_name):
        super().__init__(f"correlation undefined: series '{series_name}' has zero variance")
        self.series_name = series_name


class InsufficientHistoryError(ValidationError):
    pass


class PlanError(ValidationError):
    pass


class BenchMismatchError(ValidationError):
    """Two cube strategies produced different lattices"""
    def __init__(self, message, diff_sample=()):
        super().__init__(message)
        self.diff_sample = list(diff_sample)
