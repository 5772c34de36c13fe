"""Dense matrix kernel: SVD, Schatten norms, singular value thresholding,
and positive-definite Gram solves.

Matrices are plain ``numpy.ndarray`` values with ``dtype=float64``; all
routines here are pure functions and safe to call from multiple threads.
Singular values below ``RANK_TOL`` times the largest one are treated as zero
for rank decisions (pseudoinverse, factorization ranks).
"""

from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import NumericalError, RankDeficiencyError

# Relative singular-value cutoff for rank decisions; double-precision noise floor.
RANK_TOL = 1e-12


class SvdResult(NamedTuple):
    """Thin SVD ``m = u @ diag(sigma) @ vt`` with k = min(rows, cols)."""

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray


def as_matrix(m) -> np.ndarray:
    """Coerce input to a 2-D float64 array, rejecting non-finite entries."""
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains NaN or Inf entries")
    return a


def svd(m) -> SvdResult:
    """Thin singular value decomposition.

    Raises :class:`NumericalError` if the underlying iteration fails to
    converge (rare; LAPACK's iteration cap).
    """
    a = as_matrix(m)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    return SvdResult(u, s, vt)


def singular_values(m) -> np.ndarray:
    """Singular values of ``m``, nonincreasing."""
    a = as_matrix(m)
    try:
        return np.linalg.svd(a, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc


def matrix_rank(m, tol=RANK_TOL) -> int:
    """Numerical rank: number of singular values above ``tol * sigma_max``."""
    s = singular_values(m)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def schatten_norm(m, p) -> float:
    """Schatten p-(quasi)norm ``(sum_i sigma_i^p)^(1/p)``.

    A norm for p >= 1; for p in (0, 1) the triangle inequality fails but the
    quantity is still well defined. p = 1 is the nuclear norm, p = 2 the
    Frobenius norm.
    """
    if p <= 0:
        raise ValueError(f"Schatten exponent must be positive, got p={p}")
    s = singular_values(m)
    if s.size == 0:
        return 0.0
    return float(np.sum(s**p) ** (1.0 / p))


def nuclear_norm(m) -> float:
    """Nuclear norm: sum of singular values."""
    return float(np.sum(singular_values(m)))


def frobenius_norm(m) -> float:
    return float(np.linalg.norm(np.asarray(m, dtype=float)))


def svt(m, tau) -> np.ndarray:
    """Singular value thresholding: ``U diag(max(sigma - tau, 0)) Vt``.

    Proximal operator of ``tau * ||.||_*``.
    """
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got tau={tau}")
    u, s, vt = svd(m)
    shrunk = np.maximum(s - tau, 0.0)
    return (u * shrunk) @ vt


def sym_sqrt(m) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Negative eigenvalues (numerical noise) are clamped to zero.
    """
    a = as_matrix(m)
    a = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(a)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def pinv(m, tol=RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse with the package rank cutoff."""
    return np.linalg.pinv(as_matrix(m), rcond=tol)


class GramSolver:
    """Cholesky-factored solver for a symmetric positive definite Gram matrix.

    Factor once, solve many right-hand sides; used by the ADMM baseline where
    the same Gram matrix is hit every iteration.
    """

    def __init__(self, gram, pivot_tol=RANK_TOL):
        g = as_matrix(gram)
        if g.shape[0] != g.shape[1]:
            raise ValueError(f"Gram matrix must be square, got {g.shape}")
        try:
            self._factor = scipy.linalg.cho_factor(g, lower=True)
        except scipy.linalg.LinAlgError:
            smallest = float(np.linalg.eigvalsh(0.5 * (g + g.T))[0])
            raise RankDeficiencyError(
                f"Gram matrix is not positive definite "
                f"(smallest pivot {smallest:.3e})",
                smallest_pivot=smallest,
            ) from None
        pivots = np.diag(self._factor[0]) ** 2
        smallest = float(pivots.min())
        if smallest <= pivot_tol * float(pivots.max()):
            raise RankDeficiencyError(
                f"Gram matrix is singular within tolerance "
                f"(smallest pivot {smallest:.3e})",
                smallest_pivot=smallest,
            )

    def solve(self, rhs) -> np.ndarray:
        return scipy.linalg.cho_solve(self._factor, np.asarray(rhs, dtype=float))


def gram_solve(gram, rhs) -> np.ndarray:
    """Solve ``gram @ x = rhs`` for a symmetric positive definite ``gram``.

    Raises :class:`RankDeficiencyError` naming the smallest Cholesky pivot
    when the matrix is singular within tolerance.
    """
    return GramSolver(gram).solve(rhs)
