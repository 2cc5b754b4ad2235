"""Exception types raised across the package."""


class NVSigmaError(Exception):
    """Base class for all package errors."""


class InvalidShape(NVSigmaError, ValueError):
    pass


class NonZeroMean(NVSigmaError, ValueError):
    """The periodic problem d/dzbar(zeta) = g has no solution because mean(g) != 0."""


class ShapeMismatch(NVSigmaError, ValueError):
    pass


class NotMonic(NVSigmaError, ValueError):
    pass


class NotConstantRatio(NVSigmaError, RuntimeError):
    """The ratio series between the reflected and the dual wave varies over the torus."""


class OddObstruction(NVSigmaError, RuntimeError):
    """The identifying series h(k) has odd coefficients, so no even gauge exists."""


class DepthExceedsSeries(NVSigmaError, ValueError):
    pass


class F0Violation(NVSigmaError, RuntimeError):
    """The order-zero coefficient of L^(2n+1) does not vanish."""


class PoleAtLattice(NVSigmaError, ValueError):
    pass


class PoleHit(NVSigmaError, ValueError):
    pass


class NormViolation(NVSigmaError, ValueError):
    pass


class SingularAlpha(NVSigmaError, ValueError):
    pass


class IllConditioned(NVSigmaError, RuntimeError):
    pass


class ConstraintsNotMet(NVSigmaError, ValueError):
    pass


class FGViolation(NVSigmaError, ValueError):
    """Input pair (f1, f2) does not satisfy r1^2 f1^2 + r2^2 f2^2 = 1."""


class DegenerateDenominator(NVSigmaError, ValueError):
    pass


class DistinctnessWarning(UserWarning):
    pass
