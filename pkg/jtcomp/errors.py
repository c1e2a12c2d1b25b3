class JtcompError(Exception):
    """Base class of all errors raised by jtcomp."""


class ConfigurationError(JtcompError, ValueError):
    def __init__(self, key, message=None):
        self.key = key
        super().__init__(message or "invalid configuration key '{}'".format(key))


class DimensionError(JtcompError, ValueError):
    pass


class SupportError(JtcompError, ValueError):
    """A precoder has weights on a link whose CSI was never fed back."""


class RankDeficientError(JtcompError, ArithmeticError):
    pass


class SolverFailure(JtcompError, RuntimeError):
    pass
