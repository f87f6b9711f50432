"""Exception types raised by the package.

Errors deriving from :class:`NumericalError` signal a numerical failure
(non-convergence, bad curvature, non-finite evaluations); the command line
maps them to exit status 2.
"""


class AGHQError(Exception):
    """Base class for all package errors."""


class NumericalError(AGHQError):
    """A numerical procedure failed."""


class InvalidOrderError(AGHQError, ValueError):
    """Requested quadrature order is outside the supported range."""


class DimensionalBlowupError(AGHQError, ValueError):
    """A product rule would exceed the configured point cap."""

    def __init__(self, k, p, cap):
        self.k, self.p, self.cap = k, p, cap
        super().__init__(
            f"product rule with k={k}, p={p} needs k^p={k ** p} points, "
            f"above the cap of {cap}"
        )


class DomainError(NumericalError):
    """A transformed point left the domain of the base density."""


class DerivativeEvaluationError(NumericalError):
    """Finite differences hit a non-finite function value."""

    def __init__(self, index, message):
        self.index = index
        super().__init__(f"coordinate {index}: {message}")


class OptimizationError(NumericalError):
    """Mode finding did not converge."""

    def __init__(self, message, trace=None):
        self.trace = list(trace or [])
        super().__init__(message)


class CurvatureError(NumericalError):
    """The negative Hessian at the mode is not usable (indefinite or degenerate)."""


class NodeEvaluationError(NumericalError):
    """The log-integrand is not finite at one or more quadrature nodes."""

    def __init__(self, nodes):
        self.nodes = [list(map(float, z)) for z in nodes]
        shown = ", ".join(str(z) for z in self.nodes[:5])
        more = "" if len(self.nodes) <= 5 else f" (+{len(self.nodes) - 5} more)"
        super().__init__(f"non-finite log-integrand at standardized nodes {shown}{more}")


class InterpolationUnavailableError(AGHQError):
    """Log-marginal interpolation needs at least two support points."""


class LevelError(AGHQError, ValueError):
    """A quantile level outside (0, 1)."""


class ComponentError(NumericalError):
    """Inner Laplace approximation failed at a particular theta node."""

    def __init__(self, theta, message):
        self.theta = [float(t) for t in theta]
        super().__init__(f"inner Laplace approximation failed at theta={self.theta}: {message}")


class EstimationError(AGHQError, ValueError):
    """Not enough simulation output to estimate a rate."""


class DataError(AGHQError, ValueError):
    """Malformed input data file."""
