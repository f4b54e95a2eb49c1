"""Exception hierarchy shared by every module of the package."""


class UOTError(Exception):
    """Base class for all errors raised by ``uotpair``."""


class EmptySample(UOTError, ValueError):
    """A sample or point set with no atoms was passed where atoms are needed."""


class InvalidMassEstimate(UOTError, ValueError):
    """A mass estimate is zero (e.g. an empty Poisson draw) or otherwise unusable."""


class DimensionMismatch(UOTError, ValueError):
    pass


class NegativeWeight(UOTError, ValueError):
    pass


class NonConvergence(UOTError, RuntimeError):
    """The scaling iterations did not reach the fixed-point tolerance.

    Attributes
    ----------
    residual : float
        Last max-abs change of the dual variables.
    eps : float
        Regularization level at which the failure happened.
    """

    def __init__(self, message, residual=float("nan"), eps=float("nan")):
        super().__init__(message)
        self.residual = residual
        self.eps = eps


class InfeasibleOracle(UOTError, ValueError):
    pass


class DegenerateDensity(UOTError, ValueError):
    pass


class MassMismatch(UOTError, ValueError):
    pass


class DegenerateFit(UOTError, ValueError):
    pass


class ConfigError(UOTError, ValueError):
    pass
