"""Exception types shared across the toolkit."""


class LsocertError(Exception):
    """Base class for toolkit errors."""


class NoValidLambda(LsocertError):
    """No scalar makes the control-penalty / noise identity hold within tolerance."""

    def __init__(self, message, max_residual=None):
        super().__init__(message)
        self.max_residual = max_residual


class NonPositiveLambda(LsocertError):
    """The fitted noise/control scale came out non-positive."""


class ModelValidationError(LsocertError):
    """A problem definition violates a model invariant."""


class ProblemFileError(LsocertError):
    """A problem file failed to parse; `path` locates the offending field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class DegreeInconsistency(LsocertError):
    """Certificate degrees cannot produce a consistent polynomial identity."""


class BasisInsufficient(LsocertError):
    """A Gram basis cannot represent the required monomial support."""


class InfeasibleProgram(LsocertError):
    """The conic solver certified infeasibility; carries solver diagnostics."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class OracleError(LsocertError):
    """A finite-difference oracle precondition failed (grid, Peclet, shape)."""
