"""Shared oracles and fixtures.

The oracles here are deliberately independent re-implementations (brute
force, dense loops, finite differences) of the operations they check, and
stay ignorant of the library's internals.
"""

from __future__ import annotations

import numpy as np
import pytest

from pointcast import autodiff as ad


# ---------------------------------------------------------------------------
# finite-difference oracle


def fd_grad(scalar_fn, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central finite differences of ``scalar_fn()`` w.r.t. the array ``x``.

    ``scalar_fn`` must recompute the scalar from the current contents of
    ``x``; this mutates ``x`` in place and restores it.
    """
    grad = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        orig = x[idx]
        x[idx] = orig + h
        fp = scalar_fn()
        x[idx] = orig - h
        fm = scalar_fn()
        x[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad


def check_grads(make_loss, tensors, rtol=1e-4, atol=1e-6, h=1e-4):
    """Compare backward() gradients against central differences for each tensor."""
    loss = make_loss()
    for t in tensors:
        t.zero_grad()
    ad.backward(loss)
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = fd_grad(lambda: make_loss().item(), t.data, h=h)
        np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol)


def spread_values(rng, shape, gap: float = 0.05):
    """Random matrix whose entries are pairwise separated and away from zero.

    Keeps finite differences clear of the relu / max / smooth-L1 kinks.
    """
    size = int(np.prod(shape))
    base = (rng.permutation(size) + 1).astype(np.float64) * gap
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    jitter = rng.uniform(-0.3, 0.3) * gap
    return (sign * base + jitter).reshape(shape)


# ---------------------------------------------------------------------------
# brute-force references


def brute_group_by_keys(keys):
    """First-appearance grouping of arbitrary hashable keys via a dict."""
    key_to_gid: dict = {}
    group_of = []
    for k in keys:
        k = int(k) if isinstance(k, np.integer) else k
        if k not in key_to_gid:
            key_to_gid[k] = len(key_to_gid)
        group_of.append(key_to_gid[k])
    members = [[] for _ in range(len(key_to_gid))]
    for i, g in enumerate(group_of):
        members[g].append(i)
    return np.asarray(group_of), [np.asarray(m) for m in members]


def brute_scatter_mean(x, group_of, n_groups):
    out = np.zeros((n_groups, x.shape[1]))
    for g in range(n_groups):
        out[g] = x[group_of == g].mean(axis=0)
    return out


def brute_scatter_max(x, group_of, n_groups):
    out = np.zeros((n_groups, x.shape[1]))
    for g in range(n_groups):
        out[g] = x[group_of == g].max(axis=0)
    return out


def brute_radius_pairs(points, radius):
    """O(N^2) inclusive radius search; pairs sorted by (center, neighbor)."""
    n = len(points)
    centers, neighbors = [], []
    for i in range(n):
        for j in range(n):
            d = points[j] - points[i]
            if d @ d <= radius * radius:
                centers.append(i)
                neighbors.append(j)
    return np.asarray(centers), np.asarray(neighbors)


# ---------------------------------------------------------------------------
# fixtures


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
