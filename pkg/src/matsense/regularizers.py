"""Closed-form induced regularizers and the factorizations that attain them.

Three closed forms are implemented for the minimum sharpness over all depth-L
factorizations of a fixed end-to-end matrix M:

* the ensemble-expectation surrogate, minimized exactly by an orthogonal-frame
  construction: value ``L (d0 dL)^(1/L) ||M||_*^(2(L-1)/L)``;
* depth 2 with arbitrary measurements: ``2 ||B1 M B2||_*`` where B1, B2 are
  the symmetric square roots of the averaged Gram operators of the ensemble;
* a single measurement at any depth: ``L ||(A^T M)^(L-1) A^T||_{S_{2/L}}^{2/L}``.

Each ``factorize_*`` routine returns the constructed net together with the
value it achieves and the closed-form value it is supposed to match.
"""

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import NumericalError
from .measurements import MeasurementSet
from .network import DeepNet, end_to_end, reg_R, trace_hessian


@dataclass
class FactorizationResult:
    """A constructed factorization and the value it attains."""

    net: DeepNet
    achieved_value: float
    formula_value: float


def induced_F_prime(m, l, d0, dl) -> float:
    """Minimum of the expectation surrogate over factorizations of ``m``.

    ``l (d0 dl)^(1/l) ||m||_*^(2(l-1)/l)``.
    """
    if l < 2:
        raise ValueError(f"depth must be at least 2, got {l}")
    nuc = linalg.nuclear_norm(m)
    return float(l * (d0 * dl) ** (1.0 / l) * nuc ** (2.0 * (l - 1) / l))


def _orthonormal_frame(rng, rows, cols) -> np.ndarray:
    """Random ``rows x cols`` matrix with orthonormal columns (QR of Gaussian)."""
    q, _ = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q


def factorize_min_R(m, l, dims, seed) -> FactorizationResult:
    """Factorization of ``m`` minimizing the expectation surrogate exactly.

    Layers are scaled orthogonal frames around the SVD of ``m``; the scale of
    each layer is chosen so all L terms of the surrogate are equal (the AM-GM
    equality case), which attains the closed-form minimum.

    ``dims`` is the full width vector d_0..d_L; every intermediate width must
    be at least rank(m).
    """
    a = linalg.as_matrix(m)
    dims = [int(d) for d in dims]
    if l < 2:
        raise ValueError(f"depth must be at least 2, got {l}")
    if len(dims) != l + 1:
        raise ValueError(f"dims must have length {l + 1}, got {len(dims)}")
    if a.shape != (dims[-1], dims[0]):
        raise ValueError(f"target shape {a.shape} != ({dims[-1]}, {dims[0]})")
    d0, dl = dims[0], dims[-1]
    formula = induced_F_prime(a, l, d0, dl)

    rank = linalg.matrix_rank(a)
    if rank == 0:
        layers = [np.zeros((dims[j + 1], dims[j])) for j in range(l)]
        net = DeepNet(layers)
        return FactorizationResult(net, reg_R(net), formula)
    if any(d < rank for d in dims[1:-1]):
        raise ValueError(
            f"intermediate widths {dims[1:-1]} cannot carry a rank-{rank} target"
        )

    u, sigma, vt = linalg.svd(a)
    u, sigma, vt = u[:, :rank], sigma[:rank], vt[:rank, :]
    sqrt_sigma = np.sqrt(sigma)
    nuc = float(np.sum(sigma))

    # Equal-term scalings: with t the common value of each surrogate term,
    # c_1^2 = d0*nuc/t, c_L^2 = dL*nuc/t, middle c_j^2 = nuc^2/t; their
    # product is 1, so the layers compose exactly to m.
    t = (d0 * dl) ** (1.0 / l) * nuc ** (2.0 * (l - 1) / l)
    c_first = np.sqrt(d0 * nuc / t)
    c_last = np.sqrt(dl * nuc / t)
    c_mid = nuc / np.sqrt(t)

    rng = np.random.default_rng(seed)
    frames = [_orthonormal_frame(rng, dims[j], rank) for j in range(1, l)]
    layers = [c_first * frames[0] @ (sqrt_sigma[:, None] * vt)]
    for j in range(2, l):
        layers.append(c_mid * frames[j - 1] @ frames[j - 2].T)
    layers.append(c_last * (u * sqrt_sigma) @ frames[-1].T)

    net = DeepNet(layers)
    return FactorizationResult(net, reg_R(net), formula)


def _gram_roots(ms: MeasurementSet):
    """Symmetric square roots of the averaged Gram operators of the ensemble."""
    left = np.einsum("nij,nkj->ik", ms.mats, ms.mats) / ms.n
    right = np.einsum("nji,njk->ik", ms.mats, ms.mats) / ms.n
    return linalg.sym_sqrt(left), linalg.sym_sqrt(right)


def induced_F_depth2(m, ms: MeasurementSet) -> float:
    """Minimum sharpness over depth-2 factorizations: ``2 ||B1 m B2||_*``."""
    a = linalg.as_matrix(m)
    if a.shape != (ms.d_out, ms.d_in):
        raise ValueError(f"target shape {a.shape} != ({ms.d_out}, {ms.d_in})")
    b1, b2 = _gram_roots(ms)
    return 2.0 * linalg.nuclear_norm(b1 @ a @ b2)


def factorize_min_trace_depth2(m, ms: MeasurementSet, dims) -> FactorizationResult:
    """Depth-2 factorization attaining the closed-form minimum sharpness.

    From the SVD ``U diag(s) V^T`` of ``B1 m B2``:
    ``W2 = B1^+ U diag(s)^(1/2)`` and ``W1 = diag(s)^(1/2) V^T B2^+`` (zero
    padded up to width d_1).  Pseudoinverses extend the construction to
    singular Gram roots; feasibility is checked by reconstructing the
    end-to-end matrix.
    """
    a = linalg.as_matrix(m)
    dims = [int(d) for d in dims]
    if len(dims) != 3:
        raise ValueError(f"dims must be (d0, d1, dL), got {dims}")
    if a.shape != (dims[-1], dims[0]):
        raise ValueError(f"target shape {a.shape} != ({dims[-1]}, {dims[0]})")
    d0, d1, dl = dims
    b1, b2 = _gram_roots(ms)
    core = b1 @ a @ b2
    rank = linalg.matrix_rank(core)
    if d1 < rank:
        raise ValueError(f"hidden width {d1} cannot carry a rank-{rank} core")

    formula = 2.0 * linalg.nuclear_norm(core)
    u, sigma, vt = linalg.svd(core)
    u, sigma, vt = u[:, :rank], sigma[:rank], vt[:rank, :]
    sqrt_sigma = np.sqrt(sigma)

    w2 = np.zeros((dl, d1))
    w1 = np.zeros((d1, d0))
    w2[:, :rank] = linalg.pinv(b1) @ (u * sqrt_sigma)
    w1[:rank, :] = sqrt_sigma[:, None] * (vt @ linalg.pinv(b2))
    net = DeepNet([w1, w2])

    recon = end_to_end(net)
    scale = max(1.0, linalg.frobenius_norm(a))
    if linalg.frobenius_norm(recon - a) > 1e-8 * scale:
        raise NumericalError(
            "target is not in the range of the ensemble Gram roots; "
            "no depth-2 factorization attains the closed form"
        )
    achieved = trace_hessian(net, ms).paper_trace
    return FactorizationResult(net, achieved, formula)


def induced_F_single(a, m, l) -> float:
    """Minimum sharpness at depth ``l`` for a single measurement ``a``.

    ``l * ||(a^T m)^(l-1) a^T||_{S_{2/l}}^{2/l}``, a Schatten quasinorm of the
    alternating product; equals ``l * sum_i s_i^(2/l)`` over its singular
    values.
    """
    if l < 2:
        raise ValueError(f"depth must be at least 2, got {l}")
    a = linalg.as_matrix(a)
    m = linalg.as_matrix(m)
    if a.shape != m.shape:
        raise ValueError(f"measurement shape {a.shape} != target shape {m.shape}")
    x = np.linalg.matrix_power(a.T @ m, l - 1) @ a.T
    p = 2.0 / l
    return float(l * linalg.schatten_norm(x, p) ** p)
