"""Dense tensors: matricization, partial contractions and subspace extraction.

Dense tensors are plain ``numpy.ndarray`` objects in C (row-major) order,
axis ``j - 1`` carrying mode ``j``. Mode sets are 1-based tuples as in
:mod:`tbtensor.tree`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class Frame:
    """Basis of a subspace, stored as the columns of ``basis`` (n x r)."""

    basis: np.ndarray
    orthonormal: bool = True

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def orthonormality_defect(self) -> float:
        if self.rank == 0:
            return 0.0
        gram = self.basis.T @ self.basis
        return float(np.max(np.abs(gram - np.eye(self.rank))))


def _as_tensor(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor entries must be finite")
    return arr


def _positions(modes: Sequence[int], alpha: Sequence[int]) -> list[int]:
    lookup = {m: i for i, m in enumerate(alpha)}
    return [lookup[m] for m in modes]


def matricize(v, beta: Sequence[int], alpha: Sequence[int] | None = None) -> np.ndarray:
    """Unfold ``v`` with rows over the modes ``beta`` and columns over ``alpha \\ beta``.

    ``v`` carries the modes of ``alpha`` (sorted) on its axes; ``alpha``
    defaults to ``1..v.ndim``. Row and column multi-indices are row-major in
    increasing mode order.
    """
    v = _as_tensor(v)
    alpha = tuple(range(1, v.ndim + 1)) if alpha is None else tuple(sorted(alpha))
    beta = tuple(sorted(beta))
    if len(alpha) != v.ndim:
        raise ValueError(f"tensor has {v.ndim} axes but alpha has {len(alpha)} modes")
    if not set(beta) <= set(alpha):
        raise ValueError(f"{beta} is not a subset of {alpha}")
    rest = tuple(m for m in alpha if m not in beta)
    order = _positions(beta, alpha) + _positions(rest, alpha)
    rows = int(np.prod([v.shape[i] for i in _positions(beta, alpha)], dtype=int))
    return np.transpose(v, order).reshape(rows, -1)


def unmatricize(m: np.ndarray, beta: Sequence[int], dims: Sequence[int], alpha: Sequence[int] | None = None) -> np.ndarray:
    """Inverse of :func:`matricize` for a tensor with shape ``dims`` over ``alpha``."""
    alpha = tuple(range(1, len(dims) + 1)) if alpha is None else tuple(sorted(alpha))
    beta = tuple(sorted(beta))
    rest = tuple(m_ for m_ in alpha if m_ not in beta)
    order = _positions(beta, alpha) + _positions(rest, alpha)
    shape = [dims[i] for i in order]
    return np.transpose(np.asarray(m).reshape(shape), np.argsort(order))


def contract_functional(v, keep: Sequence[int], phi) -> np.ndarray:
    """Apply ``id_keep (x) phi`` to ``v``: contract all modes outside ``keep`` against ``phi``."""
    v = _as_tensor(v)
    phi = _as_tensor(phi)
    keep = tuple(sorted(keep))
    other = [m for m in range(1, v.ndim + 1) if m not in keep]
    expected = tuple(v.shape[m - 1] for m in other)
    if phi.shape != expected:
        raise ValueError(f"functional has shape {phi.shape}, expected {expected}")
    return np.tensordot(v, phi, axes=([m - 1 for m in other], list(range(phi.ndim))))


def inner(u, v) -> float:
    u = _as_tensor(u)
    v = _as_tensor(v)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {v.shape}")
    return float(np.dot(u.ravel(), v.ravel()))


def frobenius_norm(v) -> float:
    return float(np.linalg.norm(_as_tensor(v).ravel()))


def fix_signs(u: np.ndarray) -> np.ndarray:
    """Flip columns so the first entry of non-negligible size is positive."""
    u = np.array(u, dtype=float, copy=True)
    for k in range(u.shape[1]):
        col = u[:, k]
        big = np.abs(col) > 1e-12 * max(np.abs(col).max(initial=0.0), 1e-300)
        if big.any() and col[np.argmax(big)] < 0:
            u[:, k] = -col
    return u


def rank_threshold(s: np.ndarray, tol: float, shape: tuple[int, int]) -> float:
    """Absolute singular-value cutoff for relative tolerance ``tol``.

    ``tol = 0`` still discards round-off: the cutoff never drops below
    ``eps * max(shape) * sigma_max``.
    """
    if s.size == 0:
        return 0.0
    floor = np.finfo(float).eps * max(shape)
    return max(tol, floor) * s[0]


def svd_sorted(m: np.ndarray):
    u, s, vt = np.linalg.svd(np.asarray(m, dtype=float), full_matrices=False)
    return u, s, vt


def column_space(m, tol: float = DEFAULT_TOL, max_rank: int | None = None) -> Frame:
    """Orthonormal frame for the column span of ``m``.

    Rank counts singular values above ``tol * sigma_max``; a zero matrix
    gives a rank-0 frame.
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return Frame(np.zeros((m.shape[0], 0)))
    u, s, _ = svd_sorted(m)
    if s[0] == 0.0:
        return Frame(np.zeros((m.shape[0], 0)))
    r = int(np.count_nonzero(s > rank_threshold(s, tol, m.shape)))
    if max_rank is not None:
        r = min(r, max_rank)
    return Frame(fix_signs(u[:, :r]))


def singular_values(v, alpha: Sequence[int]) -> np.ndarray:
    return np.linalg.svd(matricize(v, alpha), compute_uv=False)


def minimal_subspace(v, alpha: Sequence[int], partition: Sequence[Sequence[int]] | None = None,
                     tol: float = DEFAULT_TOL) -> Frame:
    """Orthonormal basis of the minimal subspace of ``v`` for the mode block ``alpha``.

    In finite dimension this is the column space of the ``alpha`` unfolding.
    ``partition``, if given, is only checked to contain ``alpha``.
    """
    alpha = tuple(sorted(alpha))
    if partition is not None and alpha not in {tuple(sorted(b)) for b in partition}:
        raise ValueError(f"{alpha} is not a block of the given partition")
    return column_space(matricize(v, alpha), tol)


class NormEstimate(NamedTuple):
    value: float
    lower_bound: bool  # False only when the value is exact (d <= 2)


def injective_norm(v, max_iters: int = 200, seed: int = 0, restarts: int = 8) -> NormEstimate:
    """Injective norm: sup of |<v, x_1 (x) ... (x) x_d>| over unit vectors.

    Exact for ``d <= 2`` (largest singular value). For ``d >= 3`` the value
    comes from alternating rank-one maximization with several starts and is
    attained by explicit unit vectors, so it is a certified lower bound.
    """
    v = _as_tensor(v)
    if v.ndim == 1:
        return NormEstimate(frobenius_norm(v), False)
    if v.ndim == 2:
        s = np.linalg.svd(v, compute_uv=False)
        return NormEstimate(float(s[0]) if s.size else 0.0, False)

    rng = np.random.default_rng(seed)
    starts = [[column_space(matricize(v, (j + 1,)), 0.0, max_rank=1).basis[:, 0]
               if np.any(v) else np.eye(n)[:, 0] for j, n in enumerate(v.shape)]]
    for _ in range(restarts):
        starts.append([x / np.linalg.norm(x) for x in (rng.standard_normal(n) for n in v.shape)])

    best = 0.0
    for vecs in starts:
        value = 0.0
        for _ in range(max_iters):
            for j in range(v.ndim):
                w = v
                # contract every other mode, highest axis first so indices stay valid
                for k in reversed(range(v.ndim)):
                    if k != j:
                        w = np.tensordot(w, vecs[k], axes=([k], [0]))
                nrm = np.linalg.norm(w)
                if nrm == 0.0:
                    break
                vecs[j] = w / nrm
            new = abs(_rank_one_value(v, vecs))
            if new - value <= 1e-15 * max(new, 1.0):
                value = new
                break
            value = new
        best = max(best, value)
    return NormEstimate(best, True)


def _rank_one_value(v: np.ndarray, vecs) -> float:
    w = v
    for x in reversed(vecs):
        w = np.tensordot(w, x, axes=([w.ndim - 1], [0]))
    return float(w)


def elementary(vectors: Sequence) -> np.ndarray:
    """Tensor product of a list of vectors."""
    out = np.asarray(vectors[0], dtype=float)
    for vec in vectors[1:]:
        out = np.multiply.outer(out, np.asarray(vec, dtype=float))
    return out
