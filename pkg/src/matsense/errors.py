"""Error types shared across the package.

Domain errors (bad arguments, shape mismatches, invalid enums) are plain
``ValueError``; the classes below mark genuine numerical failures so callers
can map them to distinct exit codes.
"""


class NumericalError(RuntimeError):
    """A numerical routine failed (non-convergence, loss of rank, ...)."""


class RankDeficiencyError(NumericalError):
    """A Gram matrix was singular within tolerance."""

    def __init__(self, message, smallest_pivot=None):
        super().__init__(message)
        self.smallest_pivot = smallest_pivot


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message, primal_residual=None, dual_residual=None):
        super().__init__(message)
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual


class DivergenceError(NumericalError):
    """A training run blew up (non-finite or absurdly large loss)."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
