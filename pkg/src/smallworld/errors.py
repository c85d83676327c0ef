"""Exception types shared across the package."""


class SmallWorldError(Exception):
    """Base class; the CLI turns these into machine-readable error JSON."""

    code = "error"


class BallTooLarge(SmallWorldError):
    code = "ball_too_large"


class DegenerateTail(SmallWorldError):
    code = "degenerate_tail"


class HorizonExceeded(SmallWorldError):
    code = "horizon_exceeded"


class Divergent(SmallWorldError):
    code = "divergent"


class QuadratureFailure(SmallWorldError):
    code = "quadrature_failure"


class DomainExceeded(SmallWorldError):
    code = "domain_exceeded"


class NoBracket(SmallWorldError):
    code = "no_bracket"


class PrecisionError(SmallWorldError):
    code = "precision"


class TooLarge(SmallWorldError):
    code = "too_large"


class ConvergenceFailure(SmallWorldError):
    code = "convergence_failure"


class InvalidSample(SmallWorldError):
    code = "invalid_sample"


class InvalidConfig(SmallWorldError):
    code = "invalid_config"
