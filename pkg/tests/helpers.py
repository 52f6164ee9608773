"""Shared fixtures and independent oracles for the test-suite."""

import numpy as np
from scipy.linalg import subspace_angles

from tbtensor.tree import validate_tree

# root with six singleton children
STAR6 = validate_tree((1, 2, 3, 4, 5, 6), {(1, 2, 3, 4, 5, 6): [(j,) for j in range(1, 7)]})

# {1..6} -> {1,2,3}, {4,5}, {6}; {1,2,3} -> singletons; {4,5} -> singletons
MIXED6 = validate_tree((1, 2, 3, 4, 5, 6), {
    (1, 2, 3, 4, 5, 6): [(1, 2, 3), (4, 5), (6,)],
    (1, 2, 3): [(1,), (2,), (3,)],
    (4, 5): [(4,), (5,)],
})


def max_angle(a, b) -> float:
    """Largest principal angle between the column spans of ``a`` and ``b``."""
    if a.shape[1] != b.shape[1]:
        return np.pi / 2
    if a.shape[1] == 0:
        return 0.0
    return float(np.max(subspace_angles(a, b)))


def rel(a, b) -> float:
    return float(np.linalg.norm(np.ravel(a - b)) / np.linalg.norm(np.ravel(b)))


def delta2(d: int) -> np.ndarray:
    """e1 (x) ... (x) e1 + e2 (x) ... (x) e2 in (R^2)^{(x) d}."""
    v = np.zeros((2,) * d)
    v[(0,) * d] = 1.0
    v[(1,) * d] = 1.0
    return v


def random_low_rank(rng, dims, terms: int) -> np.ndarray:
    """Sum of ``terms`` random elementary tensors."""
    v = np.zeros(dims)
    for _ in range(terms):
        t = rng.standard_normal(dims[0])
        for n in dims[1:]:
            t = np.multiply.outer(t, rng.standard_normal(n))
        v += t
    return v


def rank_by_enumeration(v, modes) -> int:
    """Unfolding rank built by walking every multi-index (no reshape or transpose)."""
    rest = [m for m in range(1, v.ndim + 1) if m not in modes]
    rows = list(np.ndindex(*[v.shape[m - 1] for m in modes]))
    cols = list(np.ndindex(*[v.shape[m - 1] for m in rest]))
    mat = np.zeros((len(rows), len(cols)))
    for i, ri in enumerate(rows):
        for k, ck in enumerate(cols):
            idx = [0] * v.ndim
            for m, x in zip(modes, ri):
                idx[m - 1] = x
            for m, x in zip(rest, ck):
                idx[m - 1] = x
            mat[i, k] = v[tuple(idx)]
    return int(np.linalg.matrix_rank(mat, tol=1e-10 * max(1.0, np.abs(mat).max())))
