"""Exception hierarchy shared by every module of the package."""


class TwinError(Exception):
    """Base class for all errors raised by ngrc_twin."""

    exit_code = 1


class ConfigurationError(TwinError, ValueError):
    """A parameter set violates its invariants."""

    exit_code = 2

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class UsageError(TwinError, ValueError):
    """An operation was called with arguments outside its contract."""

    exit_code = 2


class DataFormatError(TwinError, ValueError):
    """A run, calibration or model file could not be parsed."""

    exit_code = 3

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class VersionError(DataFormatError):
    """A serialized model was written by an unsupported schema version."""


class UpsamplingError(TwinError, ValueError):
    """Alignment would require upsampling a channel, which is unsupported."""

    exit_code = 3


class MergeError(TwinError, ValueError):
    """Runs with different rates or channel sets cannot be merged."""

    exit_code = 3


class DegenerateRangeError(TwinError, ValueError):
    """A channel or target is constant where a nonzero range is required."""

    exit_code = 4


class NumericError(TwinError, ArithmeticError):
    """Non-finite values or a failed linear solve."""

    exit_code = 4


class InsufficientHistoryError(TwinError, ValueError):
    """A series is too short to fill the delay taps."""

    exit_code = 4


class SliceTooShortError(InsufficientHistoryError):
    """A test slice cannot hold the delay warmup plus two scored steps."""


class ContractError(TwinError, ValueError):
    """Inputs do not match the channels a model was trained on."""

    exit_code = 5
