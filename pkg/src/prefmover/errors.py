"""Exception hierarchy shared by every module of the package."""


class PrefMoverError(Exception):
    """Base class for all package errors."""


class NotFound(PrefMoverError, KeyError):
    pass


class DegenerateUser(PrefMoverError, ValueError):
    pass


class DegenerateVector(PrefMoverError, ValueError):
    pass


class InvalidSimilarity(PrefMoverError, ValueError):
    pass


class InvalidDistance(PrefMoverError, ValueError):
    pass


class InfeasibleProblem(PrefMoverError, ValueError):
    pass


class InvalidCost(PrefMoverError, ValueError):
    pass


class OracleLimitExceeded(PrefMoverError, ValueError):
    pass


class ConvergenceFailure(PrefMoverError, RuntimeError):
    """Raised when an iterative solver hits its iteration cap.

    ``marginal_error`` holds the L1 marginal violation of the last iterate.
    """

    def __init__(self, message, marginal_error):
        super().__init__(message)
        self.marginal_error = marginal_error


class ParseError(PrefMoverError, ValueError):
    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.line = line
        self.path = path


class CacheInvalid(PrefMoverError, ValueError):
    pass


class EmptyTestSet(PrefMoverError, ValueError):
    pass


class ConfigError(PrefMoverError, ValueError):
    pass
