"""Evaluation utilities: population loss, recovery bounds, truncated loss.

For isotropic ensembles (unit-variance independent entries) the population
squared loss of an end-to-end matrix equals its squared Frobenius distance to
the ground truth, so evaluation never needs fresh samples.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import linalg


@dataclass
class EvalReport:
    pop_loss: float
    recovery_bound: float
    nuclear_ratio: float  # NaN when no min-nuclear baseline was computed
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "pop_loss": self.pop_loss,
            "recovery_bound": self.recovery_bound,
            "nuclear_ratio": self.nuclear_ratio,
            "notes": self.notes,
        }


def population_loss(m, m_star) -> float:
    """Expected squared prediction error over fresh isotropic measurements.

    Equals ``||m - m_star||_F^2`` exactly.
    """
    a = np.asarray(m, dtype=float)
    b = np.asarray(m_star, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sum((a - b) ** 2))


def recovery_bound(delta, m_star) -> float:
    """Worst-case recovery error of a minimum-sharpness interpolant.

    ``8 delta / (1 - delta)^2 * ||m_star||_*^2`` for a rank-2 isometry
    constant ``delta``; the caller supplies ``delta`` (typically an empirical
    estimate plus an explicit margin).
    """
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must be in [0, 1), got {delta}")
    return 8.0 * delta / (1.0 - delta) ** 2 * linalg.nuclear_norm(m_star) ** 2


def frobenius_lowerbound_expect(n, d0, dl, m_star) -> float:
    """Expected population loss of the minimum-Frobenius interpolant.

    ``(1 - min(n, d0*dL) / (d0*dL)) * ||m_star||_F^2`` under Gaussian
    measurements: the interpolant is the projection of the truth onto the
    random n-dimensional measurement span.
    """
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    total = d0 * dl
    return (1.0 - min(n, total) / total) * linalg.frobenius_norm(m_star) ** 2


def truncated_loss(x, y, c) -> float:
    """Smooth truncation of the squared loss, capped at ``2 c^2``.

    Quadratic within ``|x - y| <= c``, blended quadratically on
    ``c <= |x - y| <= 2c``, constant beyond; continuous everywhere and with a
    2-Lipschitz derivative in ``x``.
    """
    if c <= 0:
        raise ValueError(f"truncation threshold must be positive, got c={c}")
    d = abs(x - y)
    if d <= c:
        return d * d
    if d <= 2 * c:
        return -d * d + 4 * c * d - 2 * c * c
    return 2 * c * c


def nuclear_ratio(m, baseline_nuclear=None) -> float:
    """``||m||_* / baseline``; NaN when no baseline value is supplied."""
    if baseline_nuclear is None:
        return math.nan
    return linalg.nuclear_norm(m) / baseline_nuclear
