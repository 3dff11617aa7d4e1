"""Exception and warning types raised across the package."""


class ProxSGDError(Exception):
    pass


class DimensionMismatch(ProxSGDError, ValueError):
    pass


class MaxIterExceeded(ProxSGDError):
    """The generic prox solver ran out of iterations.

    ``best`` holds the iterate with the smallest defect seen so far.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class NonFiniteEncountered(ProxSGDError, FloatingPointError):
    pass


class NoAveragedIterates(ProxSGDError):
    pass


class ConvergenceFailure(ProxSGDError):
    pass


class SingularLyapunov(ProxSGDError):
    pass


class CovarianceIllPosed(ProxSGDError):
    pass


class RegimeUnsupported(ProxSGDError):
    pass


class InsufficientRuns(ProxSGDError, ValueError):
    pass


class ReplicationFailed(ProxSGDError):
    def __init__(self, index, cause):
        super().__init__(f"replication {index} failed: {cause!r}")
        self.index = index
        self.cause = cause


class DegenerateSeries(UserWarning):
    """Non-positive errors were floored before taking logs."""


class RegimeWarning(UserWarning):
    pass
