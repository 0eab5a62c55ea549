"""Exception hierarchy shared by all modules."""


class TorusNodalError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(TorusNodalError, ValueError):
    pass


class EmptyFrequencySetError(TorusNodalError, ValueError):
    pass


class NonInvariantSubsetError(TorusNodalError, ValueError):
    pass


class AliasingRiskError(TorusNodalError, ValueError):
    pass


class DegenerateSeparationError(TorusNodalError, ArithmeticError):
    """u(z)^2 = 1, so the reduced covariance is undefined."""


class NonPositiveDefiniteOmegaError(TorusNodalError, ArithmeticError):
    pass


class UnsupportedDimensionError(TorusNodalError, ValueError):
    pass


class UnderResolvedError(TorusNodalError, ValueError):
    pass


class FrequencyNotInLatticeError(TorusNodalError, ValueError):
    pass
