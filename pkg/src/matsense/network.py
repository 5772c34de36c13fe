"""Deep linear network state, loss, exact gradients, and sharpness measures.

A network is an ordered list of layer matrices ``W_1 .. W_L`` (layer j has
shape ``d_j x d_{j-1}``); its end-to-end matrix is the product
``W_L @ ... @ W_1``.  The training loss is the mean squared error of the
linear measurements against the labels.

Two sharpness quantities are computed at a parameter point:

* ``paper_trace`` - the per-measurement average of the squared Frobenius
  norms of all partial products wrapping each layer's transposed sensing
  matrix.  Every closed-form identity in :mod:`matsense.regularizers` is
  stated in this normalization.
* ``true_trace``  - exactly twice ``paper_trace``; at an interpolating point
  this equals the trace of the loss Hessian.  Away from zero loss the
  curvature term of the Hessian is dropped, so the value is the Gauss-Newton
  trace rather than the Hessian trace.
"""

import json
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .measurements import MeasurementSet

_MAGIC = b"MSNS1\n"


@dataclass
class DeepNet:
    """Layer matrices ``layers[j]`` = W_{j+1}, with chained shapes."""

    layers: List[np.ndarray]

    def __post_init__(self):
        self.layers = [np.asarray(w, dtype=float) for w in self.layers]
        if len(self.layers) < 2:
            raise ValueError("a deep net needs at least two layers")
        for w in self.layers:
            if w.ndim != 2:
                raise ValueError("every layer must be a 2-D matrix")
        for lower, upper in zip(self.layers, self.layers[1:]):
            if upper.shape[1] != lower.shape[0]:
                raise ValueError(
                    f"layer shapes do not chain: {lower.shape} then {upper.shape}"
                )

    def is_expressive(self) -> bool:
        """Whether every intermediate width is at least min(d0, dL).

        When true, the end-to-end map ranges over all of R^{dL x d0}, so zero
        training loss is attainable.  Factorizations of low-rank targets may
        legitimately use narrower layers.
        """
        dims = self.dims
        floor = min(dims[0], dims[-1])
        return all(d >= floor for d in dims[1:-1])

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def dims(self) -> List[int]:
        """Width vector ``d_0 .. d_L``."""
        return [self.layers[0].shape[1]] + [w.shape[0] for w in self.layers]

    def copy(self) -> "DeepNet":
        return DeepNet([w.copy() for w in self.layers])


@dataclass
class TraceReport:
    """Per-layer decomposition of the sharpness at a parameter point."""

    paper_trace: float
    true_trace: float
    per_layer: List[float]


def end_to_end(net: DeepNet) -> np.ndarray:
    """Product ``W_L @ ... @ W_1`` (shape d_L x d_0)."""
    e = net.layers[0]
    for w in net.layers[1:]:
        e = w @ e
    return e


def loss(net: DeepNet, ms: MeasurementSet) -> float:
    """Mean squared measurement error ``(1/n) sum_i (<A_i, E> - b_i)^2``."""
    residual = ms.apply(end_to_end(net)) - ms.labels
    return float(np.mean(residual**2))


def _prefixes(net: DeepNet) -> List[np.ndarray]:
    """``P[j] = W_j ... W_1`` with ``P[0] = I`` (shape d_j x d_0)."""
    out = [np.eye(net.dims[0])]
    for w in net.layers:
        out.append(w @ out[-1])
    return out


def _suffixes(net: DeepNet) -> List[np.ndarray]:
    """``S[j] = W_L ... W_{j+1}`` with ``S[L] = I`` (shape d_L x d_j)."""
    out = [np.eye(net.dims[-1])]
    for w in reversed(net.layers):
        out.append(out[-1] @ w)
    out.reverse()
    return out


def grad(
    net: DeepNet,
    ms: MeasurementSet,
    batch_indices: Sequence[int],
    label_offsets: Optional[np.ndarray] = None,
) -> List[np.ndarray]:
    """Layer gradients of the (optionally noise-shifted) mini-batch loss.

    The batch loss is ``(1/B) sum_{i in batch} (<A_i, E> - b_i + xi_i)^2``
    where ``xi`` is ``label_offsets`` (zeros when omitted).  The gradient of
    each measurement w.r.t. layer j is the transposed sandwich
    ``(W_{j-1}..W_1 A_i^T W_L..W_{j+1})^T``, so the batch gradient is a single
    sandwich of the residual-weighted adjoint.
    """
    idx = np.asarray(batch_indices, dtype=int)
    if idx.size == 0:
        raise ValueError("batch_indices must be nonempty")
    if idx.min() < 0 or idx.max() >= ms.n:
        raise ValueError(f"batch index out of range [0, {ms.n})")
    e = end_to_end(net)
    residual = ms.apply(e)[idx] - ms.labels[idx]
    if label_offsets is not None:
        offsets = np.asarray(label_offsets, dtype=float)
        if offsets.shape != (idx.size,):
            raise ValueError("label_offsets must match the batch size")
        residual = residual + offsets
    # T = (2/B) sum_i r_i A_i^T, then grad_j = (P_{j-1} T S_{j+1})^T.
    t = (2.0 / idx.size) * np.einsum("n,nij->ji", residual, ms.mats[idx])
    prefixes = _prefixes(net)
    suffixes = _suffixes(net)
    grads = []
    for j in range(1, net.depth + 1):
        sandwich = prefixes[j - 1] @ t @ suffixes[j]
        grads.append(sandwich.T)
    return grads


def trace_hessian(net: DeepNet, ms: MeasurementSet) -> TraceReport:
    """Sharpness report at ``net``; see the module docstring for conventions.

    ``per_layer[j-1] = (1/n) sum_i ||W_{j-1}..W_1 A_i^T W_L..W_{j+1}||_F^2``
    with empty partial products read as identity.  Prefix/suffix products are
    cached so the cost is O(L * n) matrix products.
    """
    prefixes = _prefixes(net)
    suffixes = _suffixes(net)
    mats_t = ms.mats.transpose(0, 2, 1)
    per_layer = []
    for j in range(1, net.depth + 1):
        sandwich = np.einsum(
            "ab,nbc,cd->nad", prefixes[j - 1], mats_t, suffixes[j], optimize=True
        )
        per_layer.append(float(np.mean(np.sum(sandwich**2, axis=(1, 2)))))
    paper = float(sum(per_layer))
    return TraceReport(paper_trace=paper, true_trace=2.0 * paper, per_layer=per_layer)


def reg_R(net: DeepNet) -> float:
    """Ensemble-expectation surrogate of the sharpness.

    ``d_0 ||W_L..W_2||_F^2 + sum_{j=2}^{L-1} ||W_L..W_{j+1}||_F^2
    ||W_{j-1}..W_1||_F^2 + d_L ||W_{L-1}..W_1||_F^2``; equals the expected
    ``paper_trace`` over fresh Gaussian (or rank-one Gaussian) ensembles.
    """
    prefixes = _prefixes(net)
    suffixes = _suffixes(net)
    d0, dl = net.dims[0], net.dims[-1]
    l = net.depth
    total = d0 * float(np.sum(suffixes[1] ** 2))
    for j in range(2, l):
        total += float(np.sum(suffixes[j] ** 2)) * float(np.sum(prefixes[j - 1] ** 2))
    total += dl * float(np.sum(prefixes[l - 1] ** 2))
    return total


def save_net(net: DeepNet, path) -> None:
    """Checkpoint: dims header plus little-endian row-major layer blobs."""
    header = {"kind": "net", "dims": [int(d) for d in net.dims]}
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for w in net.layers:
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())


def load_net(path) -> DeepNet:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a net checkpoint")
        header = json.loads(fh.readline().decode())
        dims = header["dims"]
        layers = []
        for lo, hi in zip(dims[:-1], dims[1:]):
            blob = np.frombuffer(fh.read(8 * hi * lo), dtype="<f8")
            layers.append(blob.reshape(hi, lo).copy())
    return DeepNet(layers)
