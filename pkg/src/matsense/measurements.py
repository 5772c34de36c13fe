"""Measurement ensembles for linear matrix sensing.

A measurement set holds ``n`` sensing matrices ``A_i`` (shape ``d_out x d_in``),
labels ``b_i = <A_i, M*>``, and optionally the ground truth ``M*``.  Three
ensembles are supported:

* ``gaussian``  - every entry of every A_i i.i.d. standard normal;
* ``bernoulli`` - every entry +1 or -1 with equal probability (variance 1);
* ``rank_one``  - A_i = u_i v_i^T with u_i, v_i standard Gaussian vectors.

The module also provides an empirical (Monte-Carlo) lower estimate of the
restricted isometry constant of an ensemble.
"""

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import linalg

ENSEMBLES = ("gaussian", "bernoulli", "rank_one")

_MAGIC = b"MSNS1\n"


@dataclass
class MeasurementSet:
    """Sensing matrices ``mats`` (n, d_out, d_in), labels, optional truth."""

    mats: np.ndarray
    labels: np.ndarray
    ground_truth: Optional[np.ndarray]
    ensemble: str
    seed: int

    def __post_init__(self):
        self.mats = np.asarray(self.mats, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.mats.ndim != 3:
            raise ValueError("mats must be a stacked (n, d_out, d_in) array")
        if self.labels.shape != (self.mats.shape[0],):
            raise ValueError("labels length must match the number of matrices")
        if self.ground_truth is not None:
            self.ground_truth = np.asarray(self.ground_truth, dtype=float)
            if self.ground_truth.shape != self.mats.shape[1:]:
                raise ValueError("ground truth shape must match measurement shape")

    @property
    def n(self) -> int:
        return self.mats.shape[0]

    @property
    def d_out(self) -> int:
        return self.mats.shape[1]

    @property
    def d_in(self) -> int:
        return self.mats.shape[2]

    def apply(self, m) -> np.ndarray:
        """The linear map ``m -> (<A_i, m>)_i``."""
        return np.einsum("nij,ij->n", self.mats, np.asarray(m, dtype=float))

    def adjoint(self, coeffs) -> np.ndarray:
        """Adjoint map ``lambda -> sum_i lambda_i A_i``."""
        return np.einsum("n,nij->ij", np.asarray(coeffs, dtype=float), self.mats)

    def gram(self) -> np.ndarray:
        """Gram matrix ``G_ij = <A_i, A_j>``."""
        flat = self.mats.reshape(self.n, -1)
        return flat @ flat.T


@dataclass
class RipEstimate:
    """Empirical lower bound on the rank-r restricted isometry constant.

    ``delta_hat`` is the largest deviation of the quadratic-form ratio
    ``(1/n) sum_i <A_i, X>^2 / ||X||_F^2`` from 1 found over ``probes``
    random rank-r probes; the true constant can only be larger.
    """

    rank: int
    delta_hat: float
    probes: int
    max_ratio: float
    min_ratio: float


def gen_ground_truth(d, r, seed) -> np.ndarray:
    """Random rank-r ground truth ``M* = M1 @ M2 / d`` with Gaussian factors."""
    if r > d:
        raise ValueError(f"rank r={r} exceeds dimension d={d}")
    rng = np.random.default_rng(seed)
    m1 = rng.standard_normal((d, r))
    m2 = rng.standard_normal((r, d))
    return m1 @ m2 / d


def gen_measurements(ensemble, n, d0, dl, ground_truth, seed) -> MeasurementSet:
    """Draw ``n`` sensing matrices of shape (dl, d0) and label them.

    Labels are exact inner products with ``ground_truth`` (shape dl x d0).
    """
    if ensemble not in ENSEMBLES:
        raise ValueError(f"unknown ensemble {ensemble!r}; expected one of {ENSEMBLES}")
    if n < 1:
        raise ValueError(f"need at least one measurement, got n={n}")
    truth = np.asarray(ground_truth, dtype=float)
    if truth.shape != (dl, d0):
        raise ValueError(f"ground truth shape {truth.shape} != ({dl}, {d0})")
    rng = np.random.default_rng(seed)
    if ensemble == "gaussian":
        mats = rng.standard_normal((n, dl, d0))
    elif ensemble == "bernoulli":
        mats = 2.0 * rng.integers(0, 2, size=(n, dl, d0)).astype(float) - 1.0
    else:  # rank_one
        u = rng.standard_normal((n, dl))
        v = rng.standard_normal((n, d0))
        mats = np.einsum("ni,nj->nij", u, v)
    labels = np.einsum("nij,ij->n", mats, truth)
    return MeasurementSet(mats, labels, truth, ensemble, int(seed))


def estimate_rip(ms: MeasurementSet, rank, probes, seed) -> RipEstimate:
    """Monte-Carlo lower estimate of the rank-``rank`` isometry constant.

    Probes are ``X = U V^T / ||U V^T||_F`` with Gaussian ``U`` (d_out x rank)
    and ``V`` (d_in x rank), drawn sequentially so that enlarging ``probes``
    with the same seed extends (never replaces) the probe stream.
    """
    if probes < 1:
        raise ValueError(f"need at least one probe, got {probes}")
    if rank < 1 or rank > min(ms.d_out, ms.d_in):
        raise ValueError(f"probe rank {rank} out of range for {ms.d_out}x{ms.d_in}")
    rng = np.random.default_rng(seed)
    flat = ms.mats.reshape(ms.n, -1)
    max_ratio = -np.inf
    min_ratio = np.inf
    for _ in range(probes):
        u = rng.standard_normal((ms.d_out, rank))
        v = rng.standard_normal((ms.d_in, rank))
        x = u @ v.T
        x /= np.linalg.norm(x)
        ratio = float(np.mean((flat @ x.ravel()) ** 2))
        max_ratio = max(max_ratio, ratio)
        min_ratio = min(min_ratio, ratio)
    delta_hat = max(max_ratio - 1.0, 1.0 - min_ratio)
    return RipEstimate(int(rank), float(delta_hat), int(probes),
                       float(max_ratio), float(min_ratio))


def rip_relax_check(ms: MeasurementSet, m, delta) -> dict:
    """Check the relaxed isometry bound for an arbitrary matrix ``m``.

    For rank-2 isometry constant ``delta``, the averaged quadratic form
    deviates from ``||m||_F^2`` by at most ``2 * delta * ||m||_*^2``.
    Returns ``{"lhs": ..., "bound": ..., "ok": ...}``.
    """
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must be in [0, 1), got {delta}")
    a = np.asarray(m, dtype=float)
    lhs = abs(float(np.mean(ms.apply(a) ** 2)) - linalg.frobenius_norm(a) ** 2)
    bound = 2.0 * delta * linalg.nuclear_norm(a) ** 2
    return {"lhs": lhs, "bound": bound, "ok": lhs <= bound}


def save_measurements(ms: MeasurementSet, path) -> None:
    """Write a measurement set to a flat binary container.

    Layout: magic line, one compact JSON header line, then little-endian
    float64 blobs: labels, matrices (row-major), optional ground truth.
    Byte-identical for identical inputs.
    """
    header = {
        "kind": "measurements",
        "ensemble": ms.ensemble,
        "seed": int(ms.seed),
        "n": int(ms.n),
        "d_out": int(ms.d_out),
        "d_in": int(ms.d_in),
        "has_ground_truth": ms.ground_truth is not None,
    }
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(ms.labels, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ms.mats, dtype="<f8").tobytes())
        if ms.ground_truth is not None:
            fh.write(np.ascontiguousarray(ms.ground_truth, dtype="<f8").tobytes())


def load_measurements(path) -> MeasurementSet:
    """Read a measurement set written by :func:`save_measurements`."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a measurement container")
        header = json.loads(fh.readline().decode())
        n, d_out, d_in = header["n"], header["d_out"], header["d_in"]
        labels = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        mats = np.frombuffer(fh.read(8 * n * d_out * d_in), dtype="<f8")
        mats = mats.reshape(n, d_out, d_in).copy()
        truth = None
        if header["has_ground_truth"]:
            truth = np.frombuffer(fh.read(8 * d_out * d_in), dtype="<f8")
            truth = truth.reshape(d_out, d_in).copy()
    return MeasurementSet(mats, labels, truth, header["ensemble"], header["seed"])
