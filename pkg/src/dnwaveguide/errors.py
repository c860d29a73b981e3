"""Exception types raised by the solver."""


class WaveguideError(Exception):
    """Base class for all solver errors."""


class ThresholdDegenerate(WaveguideError):
    """Momentum sits on (or within the margin of) a channel threshold."""

    def __init__(self, message, threshold=None):
        super().__init__(message)
        self.threshold = threshold


class SolveFailed(WaveguideError):
    """Dense linear solve reported a singular or rank-deficient matrix."""


class WindowViolation(WaveguideError):
    """A momentum window crosses a threshold or touches k = 0."""

    def __init__(self, message, threshold=None):
        super().__init__(message)
        self.threshold = threshold


class NonConvergence(WaveguideError):
    """Iterative minimiser stalled before reaching its gradient tolerance."""

    def __init__(self, message, grad_norm=None):
        super().__init__(message)
        self.grad_norm = grad_norm


class QuadratureUnderResolved(WaveguideError):
    """Doubling the k-quadrature nodes changed the result beyond tolerance."""


class GridTooSmall(WaveguideError):
    """Spatial grid could not be grown enough to contain the packet."""
