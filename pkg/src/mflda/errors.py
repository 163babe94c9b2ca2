"""Exception hierarchy.

Every library error carries a ``category`` that the command line maps to an
exit code (2 io, 3 config, 4 numeric, 5 data).
"""


class MfldaError(Exception):
    category = "numeric"


class DataError(MfldaError, ValueError):
    category = "data"


class NumericError(MfldaError, ArithmeticError):
    category = "numeric"


class ConfigError(MfldaError, ValueError):
    category = "config"

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DomainError(DataError):
    """A time point lies outside the declared time domain."""


class InsufficientDataError(DataError):
    def __init__(self, message, subject_id=None):
        self.subject_id = subject_id
        super().__init__(message)


class EmptyModelError(DataError):
    """No subject survived smoothing."""


class DegenerateClassError(DataError):
    def __init__(self, message, klass=None):
        self.klass = klass
        super().__init__(message)


class StratificationError(DataError):
    pass


class NonEstimableError(NumericError):
    """Within-class scatter cannot be estimated (every class is a singleton)."""


class DegenerateScatterError(NumericError):
    pass


class DegenerateEigenvalueError(NumericError):
    pass


class NoViableRangeError(NumericError):
    def __init__(self, message, trace=()):
        self.trace = list(trace)
        super().__init__(message)


EXIT_CODES = {"io": 2, "config": 3, "numeric": 4, "data": 5}
