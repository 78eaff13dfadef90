"""Exception and warning types raised across the package."""


class SpdError(ValueError):
    """Base class for invalid-input errors."""


class NotSquare(SpdError):
    pass


class NotSymmetric(SpdError):
    pass


class NotPositiveDefinite(SpdError):
    def __init__(self, min_eigenvalue, threshold):
        self.min_eigenvalue = float(min_eigenvalue)
        self.threshold = float(threshold)
        super().__init__(
            f"matrix is not positive definite: smallest eigenvalue "
            f"{self.min_eigenvalue:.6g} <= tolerance {self.threshold:.6g}"
        )


class DimMismatch(SpdError):
    pass


class BaseMismatch(SpdError):
    pass


class RankDeficient(SpdError):
    """Covariance estimate is singular (too few observations or degenerate data)."""

    def __init__(self, message, rank=None, dim=None):
        self.rank = rank
        self.dim = dim
        super().__init__(message)


class EmptyList(SpdError):
    pass


class InvalidParams(SpdError):
    pass


class FoldTooSmall(SpdError):
    pass


class SingularProjectedMatrix(ArithmeticError):
    """A projected matrix W^T X W is too ill-conditioned to invert reliably."""

    def __init__(self, cond):
        self.cond = float(cond)
        super().__init__(f"projected matrix condition number {self.cond:.3g} exceeds 1e12")


class InsufficientClassSize(UserWarning):
    """A class has fewer members than the requested neighbour count + 1."""
