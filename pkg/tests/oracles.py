"""Independent oracles used by the test suite.

Everything here recomputes quantities from their definitions (finite
differences, brute-force grids, torch autograd minimization) without touching
the package's own formula paths, so agreement is evidence rather than
tautology.
"""

import numpy as np


def flatten_net(layers):
    return np.concatenate([w.ravel() for w in layers])


def unflatten_net(vec, shapes):
    out, k = [], 0
    for rows, cols in shapes:
        out.append(vec[k:k + rows * cols].reshape(rows, cols))
        k += rows * cols
    return out


def fd_gradient(f, x0, h=1e-6):
    """Central-difference gradient of a scalar function of a flat vector."""
    g = np.zeros_like(x0)
    for i in range(x0.size):
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def fd_hessian_trace(f, x0, h=1e-4):
    """Sum of diagonal second central differences."""
    f0 = f(x0)
    total = 0.0
    for i in range(x0.size):
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += h
        xm[i] -= h
        total += (f(xp) - 2 * f0 + f(xm)) / h**2
    return total


def random_factorization(m, dims, rng):
    """A random exact factorization of ``m`` through widths ``dims``.

    Built around the SVD of ``m`` with random invertible rank x rank mixing
    matrices between consecutive layers, so the product telescopes to ``m``
    while the individual layers are generic.
    """
    u, s, vt = np.linalg.svd(np.asarray(m, dtype=float), full_matrices=False)
    rank = int(np.sum(s > 1e-12 * s[0])) if s.size and s[0] > 0 else 0
    l = len(dims) - 1
    if rank == 0:
        return [np.zeros((dims[j + 1], dims[j])) for j in range(l)]
    u, s, vt = u[:, :rank], s[:rank], vt[:rank, :]
    frames = []
    for j in range(1, l):
        q, _ = np.linalg.qr(rng.standard_normal((dims[j], rank)))
        frames.append(q)
    mixers = []
    for _ in range(l - 1):
        b = rng.standard_normal((rank, rank))
        while abs(np.linalg.det(b)) < 1e-3:
            b = rng.standard_normal((rank, rank))
        mixers.append(b)

    layers = [frames[0] @ mixers[0] @ (np.sqrt(s)[:, None] * vt)]
    for j in range(2, l):
        layers.append(frames[j - 1] @ mixers[j - 1] @ np.linalg.inv(mixers[j - 2]) @ frames[j - 2].T)
    layers.append((u * np.sqrt(s)) @ np.linalg.inv(mixers[-1]) @ frames[-1].T)
    return layers


def torch_trace_objective(mats):
    """Torch evaluation of the sharpness sum for a layer list (fresh impl)."""
    import torch

    mats_t = torch.as_tensor(mats, dtype=torch.float64).transpose(1, 2)

    def objective(layers):
        l = len(layers)
        d0 = layers[0].shape[1]
        dl = layers[-1].shape[0]
        prefixes = [torch.eye(d0, dtype=torch.float64)]
        for w in layers:
            prefixes.append(w @ prefixes[-1])
        suffixes = [torch.eye(dl, dtype=torch.float64)]
        for w in reversed(layers):
            suffixes.append(suffixes[-1] @ w)
        suffixes.reverse()
        total = 0.0
        for j in range(1, l + 1):
            sandwich = torch.einsum(
                "ab,nbc,cd->nad", prefixes[j - 1], mats_t, suffixes[j]
            )
            total = total + (sandwich**2).sum(dim=(1, 2)).mean()
        return total

    return objective


def min_trace_penalty(mats, target, dims, restarts, seed, mu_max=1e8, steps=120):
    """Penalty-method minimum of the sharpness over factorizations of target.

    Minimizes ``trace_objective(W) + mu ||E(W) - target||_F^2`` with LBFGS
    and mu-continuation, over several random restarts; returns the smallest
    sharpness value found at an (almost) feasible endpoint.
    """
    import torch

    objective = torch_trace_objective(mats)
    target_t = torch.as_tensor(target, dtype=torch.float64)
    shapes = [(dims[j + 1], dims[j]) for j in range(len(dims) - 1)]
    gen = torch.Generator().manual_seed(seed)
    target_scale = max(1.0, float(torch.linalg.norm(target_t)))

    mus = [1e2, 1e4, 1e6]
    while mus[-1] < mu_max:
        mus.append(min(mus[-1] * 100, mu_max))

    best = np.inf
    for _ in range(restarts):
        layers = [
            torch.randn(s, generator=gen, dtype=torch.float64, requires_grad=True)
            for s in shapes
        ]
        for mu in mus:
            opt = torch.optim.LBFGS(
                layers, lr=0.8, max_iter=steps, tolerance_grad=1e-14,
                tolerance_change=1e-16, line_search_fn="strong_wolfe",
            )

            def closure():
                opt.zero_grad()
                e = layers[0]
                for w in layers[1:]:
                    e = w @ e
                val = objective(layers) + mu * ((e - target_t) ** 2).sum()
                val.backward()
                return val

            opt.step(closure)
        with torch.no_grad():
            e = layers[0]
            for w in layers[1:]:
                e = w @ e
            infeas = float(torch.linalg.norm(e - target_t)) / target_scale
            value = float(objective(layers))
        if infeas < 1e-3:
            best = min(best, value)
    return best
