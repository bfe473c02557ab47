"""Exception hierarchy and kernel status codes."""


class TiltseriesError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(TiltseriesError):
    """Response, covariate matrix and model specification disagree in shape."""


class NonFiniteError(TiltseriesError):
    """A dataset contains NaN or infinite entries."""


class NonIntegerCountError(TiltseriesError):
    """A count-model response contains negative or non-integer values."""


class DegenerateSupportError(TiltseriesError):
    """Fewer than two distinct support values; tilting is degenerate."""


class BoundsError(TiltseriesError):
    """A parameter lies outside the configured box bounds."""


class InfeasibleMean(TiltseriesError):
    """Target mean outside the open hull of the support atoms.

    Also raised when the tilt needed to reach a feasible mean exceeds the
    numerical cap on ``theta``; ``cap_bound`` distinguishes the two cases.
    """

    def __init__(self, message, cap_bound=False):
        super().__init__(message)
        self.cap_bound = cap_bound


class StateExplosion(TiltseriesError):
    """The state recursion produced ``|W_t|`` past the overflow guard."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class NonConvergenceError(TiltseriesError):
    """An optimizer exhausted its iteration budget without converging."""


# Status codes shared by the compiled and pure kernels.
STATUS_OK = 0
STATUS_INFEASIBLE = 1
STATUS_EXPLODED = 2
STATUS_THETA_CAP = 3
STATUS_NO_ROOT = 4


def raise_for_status(status, t=-1):
    """Map a kernel status code to the corresponding exception."""
    if status == STATUS_OK:
        return
    if status == STATUS_INFEASIBLE:
        raise InfeasibleMean(f"target mean infeasible at t={t}")
    if status == STATUS_EXPLODED:
        raise StateExplosion(f"state recursion exploded at t={t}", t=t)
    if status == STATUS_THETA_CAP:
        raise InfeasibleMean(f"tilt cap reached at t={t}", cap_bound=True)
    if status == STATUS_NO_ROOT:
        raise TiltseriesError(f"tilt root-find failed to converge at t={t}")
    raise TiltseriesError(f"unknown kernel status {status}")
