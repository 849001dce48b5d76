"""Exception types raised across the package."""


class AbbaError(Exception):
    """Base class for all errors raised by :mod:`abba`."""


class RecordFormatError(AbbaError, ValueError):
    """A line of a record file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RecordValueError(AbbaError, ValueError):
    """A record is well formed but carries an invalid value."""

    def __init__(self, message, record_id=None):
        self.record_id = record_id
        if record_id is not None:
            message = f"record {record_id!r}: {message}"
        super().__init__(message)


class ConfigError(AbbaError, ValueError):
    """A configuration is invalid or internally inconsistent."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(message)


class UndefinedRatioError(AbbaError, ArithmeticError):
    """A ratio estimator hit a zero denominator."""

    def __init__(self, estimator, term):
        self.estimator = estimator
        self.term = term
        super().__init__(f"{estimator} is undefined: {term} is zero")


class MissingSoftLabelError(AbbaError, ValueError):
    """Records needed by a semi-supervised estimator lack soft labels."""

    def __init__(self, ids):
        self.ids = list(ids)
        shown = ", ".join(self.ids[:20])
        more = f" (+{len(self.ids) - 20} more)" if len(self.ids) > 20 else ""
        super().__init__(f"missing soft_tp_prob for {len(self.ids)} record(s): {shown}{more}")


class BootstrapError(AbbaError, RuntimeError):
    """Too many bootstrap replicates were undefined."""
