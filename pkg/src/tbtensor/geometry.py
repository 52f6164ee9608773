"""Grassmann charts, local charts of fixed-TB-rank tensors and tangent spaces.

Leaf complements are orthogonal complements, so chart coordinates of a leaf
are matrices ``L_k`` of shape ``(n_k - r_k, r_k)`` acting from the base
point's leaf frame ``U_k`` into its complement frame ``W_k``. A chart point
decodes to the tensor with leaf frames ``U_k + W_k L_k`` and the given
transfer tensors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dense import DEFAULT_TOL, Frame, column_space, fix_signs, matricize, unmatricize
from .tbf import RankMismatchError, TBFTensor, axis_matricization, combine, evaluate, node_bases, tb_rank
from .tree import Node

MAX_CONDITION = 1e12


class IllConditionedError(ArithmeticError):
    pass


class CommonComplementFails(ArithmeticError):
    """The new subspace is not a graph over ``U`` along the complement ``W``."""


class NotInNeighborhood(ArithmeticError):
    pass


class RankDeficiencyError(ArithmeticError):
    pass


def _basis(f) -> np.ndarray:
    return f.basis if isinstance(f, Frame) else np.asarray(f, dtype=float)


def orthogonal_complement(u) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of span(u)."""
    u = _basis(u)
    n, r = u.shape
    if r == 0:
        return np.eye(n)
    q, _ = np.linalg.qr(u, mode="complete")
    return fix_signs(q[:, r:])


def _solve_pair(u: np.ndarray, w: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    stacked = np.hstack([u, w])
    if stacked.shape[0] != stacked.shape[1]:
        raise ValueError("dim U + dim W must equal the ambient dimension")
    if np.linalg.cond(stacked) > MAX_CONDITION:
        raise IllConditionedError("U and W are (numerically) not complementary")
    return np.linalg.solve(stacked, rhs)


def project_onto_along(x, u, w) -> np.ndarray:
    """Projection onto span(u) along span(w)."""
    u, w = _basis(u), _basis(w)
    coef = _solve_pair(u, w, np.asarray(x, dtype=float))
    return u @ coef[: u.shape[1]]


def grassmann_chart(u, w, u_prime) -> np.ndarray:
    """Chart coordinates of ``span(u_prime)`` around ``span(u)`` along ``span(w)``.

    Returns the matrix of the map ``L: U -> W`` in the coordinates of the
    given bases, so that ``span(u + w @ L) == span(u_prime)``.
    """
    u, w, up = _basis(u), _basis(w), _basis(u_prime)
    r = u.shape[1]
    if up.shape[1] != r:
        raise CommonComplementFails(f"dimension {up.shape[1]} differs from {r}")
    coef = _solve_pair(u, w, up)
    along_u, along_w = coef[:r], coef[r:]
    if r and np.linalg.cond(along_u) > MAX_CONDITION:
        raise CommonComplementFails("projection onto U restricted to U' is not invertible")
    return np.linalg.solve(along_u.T, along_w.T).T if r else np.zeros((w.shape[1], 0))


def graph(u, w, chart_map) -> Frame:
    """Basis ``u + w @ L`` of the graph of ``L``."""
    u, w = _basis(u), _basis(w)
    return Frame(u + w @ np.asarray(chart_map, dtype=float), orthonormal=False)


# --- chart parameters --------------------------------------------------------

@dataclass
class ChartParams:
    leaf_maps: dict = field(default_factory=dict)   # leaf j -> (n_j - r_j, r_j)
    transfer: dict = field(default_factory=dict)    # internal node -> coefficient tensor

    def __add__(self, other):
        return type(self)({j: self.leaf_maps[j] + other.leaf_maps[j] for j in self.leaf_maps},
                          {n: self.transfer[n] + other.transfer[n] for n in self.transfer})

    def scaled(self, a: float):
        return type(self)({j: a * m for j, m in self.leaf_maps.items()},
                          {n: a * c for n, c in self.transfer.items()})

    def vector(self) -> np.ndarray:
        parts = [self.leaf_maps[j].ravel() for j in sorted(self.leaf_maps)]
        parts += [self.transfer[n].ravel() for n in sorted(self.transfer)]
        return np.concatenate(parts) if parts else np.zeros(0)


class TangentParams(ChartParams):
    """Tangent coordinates: leaf-map velocities and transfer-tensor velocities."""


def complements(base: TBFTensor) -> dict[int, np.ndarray]:
    return {j: orthogonal_complement(base.frames[j]) for j in base.frames}


def base_params(base: TBFTensor) -> ChartParams:
    """Chart coordinates of the base point itself: zero leaf maps, its own transfers."""
    comp = complements(base)
    return ChartParams({j: np.zeros((comp[j].shape[1], base.frames[j].shape[1])) for j in base.frames},
                       {n: np.array(c, dtype=float) for n, c in base.transfer.items()})


def zero_tangent(base: TBFTensor) -> TangentParams:
    p = base_params(base)
    return TangentParams(p.leaf_maps, {n: np.zeros_like(c) for n, c in p.transfer.items()})


def _check_shapes(base: TBFTensor, p: ChartParams, comp):
    for j, frame in base.frames.items():
        want = (comp[j].shape[1], frame.shape[1])
        if p.leaf_maps[j].shape != want:
            raise ValueError(f"leaf map {j} has shape {p.leaf_maps[j].shape}, expected {want}")
    for n, c in base.transfer.items():
        if p.transfer[n].shape != c.shape:
            raise ValueError(f"transfer {n} has shape {p.transfer[n].shape}, expected {c.shape}")


def chart_decode(base: TBFTensor, p: ChartParams) -> TBFTensor:
    comp = complements(base)
    _check_shapes(base, p, comp)
    frames = {j: base.frames[j] + comp[j] @ p.leaf_maps[j] for j in base.frames}
    return TBFTensor(base.tree, frames, {n: np.array(c) for n, c in p.transfer.items()}, orthonormal=False)


# round-off floor for leaf chart maps; they are dimensionless
_CHART_FLOOR = 64 * np.finfo(float).eps


def _kron_children(x_bases, tree, node) -> np.ndarray:
    kids = tree.sons(node)
    ranks = [x_bases[k].shape[-1] for k in kids]
    ident = np.eye(math.prod(ranks)).reshape((math.prod(ranks),) + tuple(ranks))
    k = combine(ident, [x_bases[c] for c in kids], kids, node)
    return k.reshape(-1, k.shape[-1])


def chart_encode(base: TBFTensor, w, tol: float = DEFAULT_TOL) -> ChartParams:
    """Chart coordinates of ``w`` in the neighbourhood of the orthonormal ``base``.

    Internal-node bases of ``w`` are normalized against the base point's
    bases (``U_base^T B = I``), which fixes the transfer tensors uniquely.
    """
    if not base.orthonormal:
        raise ValueError("chart base point must be orthonormal")
    w = evaluate(w) if isinstance(w, TBFTensor) else np.asarray(w, dtype=float)
    tree = base.tree
    if tb_rank(w, tree, tol) != base.ranks():
        raise RankMismatchError("TB rank of w differs from the base point")
    comp = complements(base)
    ref = node_bases(base)
    maps = {}
    frames = {}
    for j in range(1, tree.d + 1):
        r = base.frames[j].shape[1]
        q = column_space(matricize(w, (j,)), 0.0, max_rank=r).basis
        try:
            m = grassmann_chart(base.frames[j], comp[j], q)
        except (CommonComplementFails, IllConditionedError) as exc:
            raise NotInNeighborhood(f"leaf {j}: {exc}") from exc
        if m.size and np.max(np.abs(m)) <= _CHART_FLOOR:
            m = np.zeros_like(m)
        maps[j] = m
        frames[j] = base.frames[j] + comp[j] @ m

    cur: dict[Node, np.ndarray] = {(j,): frames[j] for j in frames}
    transfer = {}
    for node in tree.post_order():
        if len(node) == 1:
            continue
        kmat = _kron_children(cur, tree, node)
        kids = tree.sons(node)
        kid_ranks = tuple(cur[k].shape[-1] for k in kids)
        if node == tree.root:
            coef, *_ = np.linalg.lstsq(kmat, w.reshape(-1), rcond=None)
            transfer[node] = coef.reshape((1,) + kid_ranks)
            continue
        r = base.rank_of(node)
        u_ref = ref[node].reshape(-1, r)
        q = column_space(matricize(w, node), 0.0, max_rank=r).basis
        gram = u_ref.T @ q
        if np.linalg.cond(gram) > MAX_CONDITION:
            raise NotInNeighborhood(f"node {node}: subspace is not a graph over the base subspace")
        b = q @ np.linalg.inv(gram)
        coef, *_ = np.linalg.lstsq(kmat, b, rcond=None)
        core = coef.T.reshape((r,) + kid_ranks)
        transfer[node] = core
        cur[node] = combine(core, [cur[k] for k in kids], kids, node)
    return ChartParams(maps, transfer)


# --- tangent vectors -----------------------------------------------------------

def tbf_derivative(x: TBFTensor, frame_dots: dict, transfer_dots: dict) -> np.ndarray:
    """Directional derivative of evaluation, product rule leaves to root."""
    tree = x.tree
    vals: dict[Node, np.ndarray] = {}
    ders: dict[Node, np.ndarray] = {}
    for node in tree.post_order():
        if len(node) == 1:
            vals[node] = np.asarray(x.frames[node[0]], dtype=float)
            ders[node] = np.asarray(frame_dots[node[0]], dtype=float)
            continue
        kids = tree.sons(node)
        kv = [vals[k] for k in kids]
        vals[node] = combine(x.transfer[node], kv, kids, node)
        der = combine(transfer_dots[node], kv, kids, node)
        for i in range(len(kids)):
            swapped = list(kv)
            swapped[i] = ders[kids[i]]
            der = der + combine(x.transfer[node], swapped, kids, node)
        ders[node] = der
    return ders[tree.root][..., 0]


def tangent_assemble(base: TBFTensor, t: TangentParams) -> np.ndarray:
    """Dense tangent vector for tangent coordinates ``t`` at ``base``."""
    comp = complements(base)
    _check_shapes(base, t, comp)
    dots = {j: comp[j] @ t.leaf_maps[j] for j in base.frames}
    return tbf_derivative(base, dots, t.transfer)


@dataclass
class _Layout:
    """Column layout of a Jacobian: which parameter each block belongs to."""

    blocks: list  # (kind, key, shape, embed) with embed mapping coefficients -> full block

    def to_params(self, coef: np.ndarray, template: ChartParams) -> TangentParams:
        leaf = {j: np.zeros_like(m) for j, m in template.leaf_maps.items()}
        trans = {n: np.zeros_like(c) for n, c in template.transfer.items()}
        pos = 0
        for kind, key, size, embed in self.blocks:
            block = embed(coef[pos: pos + size])
            pos += size
            if kind == "leaf":
                leaf[key] = block
            else:
                trans[key] = block
        return TangentParams(leaf, trans)


def _pinv_rows(b: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Solve ``b @ e = m`` for ``e`` with ``b`` of full column rank."""
    e, *_ = np.linalg.lstsq(b, m, rcond=None)
    return e


def jacobian(x: TBFTensor, leaf_complements: dict, gauge: bool = True):
    """Matrix of the tangent map at ``x`` (columns = parameter directions).

    Leaf directions move frame ``j`` inside ``leaf_complements[j]``. With
    ``gauge`` the transfer velocities of non-root internal nodes are
    restricted to the orthogonal complement of the node's coefficient row
    space, which removes the basis-change redundancy of the parametrization.
    """
    tree = x.tree
    dims = x.dims
    v = evaluate(x)
    bases = node_bases(x)
    cols = []
    blocks = []
    for node in tree.nodes():
        if node == tree.root:
            kmat = _kron_children(bases, tree, node)
            cols.append(kmat)
            shape = x.transfer[node].shape
            blocks.append(("transfer", node, kmat.shape[1], lambda c, s=shape: c.reshape(s)))
            continue
        r = x.rank_of(node)
        b = bases[node].reshape(-1, r)
        env = _pinv_rows(b, matricize(v, node))            # r x N_rest
        if len(node) == 1:
            wj = leaf_complements[node[0]]
            na = wj.shape[1]
            # column (a, b): W[:, a] (x) env[b, :]
            if na * r == 0:
                cols.append(np.zeros((v.size, 0)))
            else:
                gen = np.einsum("ia,bj->abij", wj, env).reshape(na * r, -1)
                cols.append(np.stack([unmatricize(g.reshape(wj.shape[0], -1), node, dims).ravel() for g in gen],
                                     axis=1))
            blocks.append(("leaf", node[0], na * r, lambda c, s=(na, r): c.reshape(s)))
            continue
        core = x.transfer[node]
        kmat = _kron_children(bases, tree, node)           # N_node x prod r_kids
        rows = core.reshape(r, -1)
        if gauge:
            q, _ = np.linalg.qr(rows.T, mode="complete")
            dirs = q[:, r:]                                # prod r_kids x (prod - r)
        else:
            dirs = np.eye(rows.shape[1])
        if r * dirs.shape[1] == 0:
            cols.append(np.zeros((v.size, 0)))
        else:
            kd = kmat @ dirs
            gen = np.einsum("ak,ij->ikaj", kd, env).reshape(r * dirs.shape[1], kmat.shape[0], -1)
            cols.append(np.stack([unmatricize(g, node, dims).ravel() for g in gen], axis=1))
        blocks.append(("transfer", node, r * dirs.shape[1],
                       lambda c, s=core.shape, dd=dirs, rr=r: (c.reshape(rr, -1) @ dd.T).reshape(s)))
    return np.hstack(cols), _Layout(blocks)


def parameter_dimension(base: TBFTensor) -> int:
    """dim of the coefficient space plus sum of r_k (n_k - r_k) over leaves."""
    total = sum(c.size for c in base.transfer.values())
    total += sum(f.shape[1] * (f.shape[0] - f.shape[1]) for f in base.frames.values())
    return total


def tangent_dimension(base: TBFTensor) -> int:
    """Parameter dimension minus the r_a^2 basis-change directions of non-root internal nodes."""
    tree = base.tree
    gauge = sum(base.rank_of(n) ** 2 for n in tree.internal_nodes() if n != tree.root)
    return parameter_dimension(base) - gauge


def tangent_generators(base: TBFTensor, gauge: bool = False) -> np.ndarray:
    """Images of the parameter-space unit vectors, one column each."""
    j, _ = jacobian(base, complements(base), gauge=gauge)
    return j


def _orthonormal_tangent_frame(base: TBFTensor, tol: float = 1e-10) -> np.ndarray:
    j, _ = jacobian(base, complements(base), gauge=True)
    u, s, _ = np.linalg.svd(j, full_matrices=False)
    expected = tangent_dimension(base)
    rank = 0 if s.size == 0 or s[0] == 0 else int(np.count_nonzero(s > tol * s[0]))
    if rank < expected:
        raise RankDeficiencyError(f"tangent generators have rank {rank}, expected {expected}")
    return fix_signs(u[:, :rank])


def tangent_basis(base: TBFTensor, tol: float = 1e-10) -> list[np.ndarray]:
    """Orthonormal basis of the tangent space at ``base`` as dense tensors."""
    q = _orthonormal_tangent_frame(base, tol)
    return [q[:, k].reshape(base.dims) for k in range(q.shape[1])]


def _solve_tangent(x: TBFTensor, comp: dict, target: np.ndarray):
    j, layout = jacobian(x, comp, gauge=True)
    s = np.linalg.svd(j, compute_uv=False)
    if s.size and (s[-1] == 0 or (s[0] / s[-1]) ** 2 > MAX_CONDITION):
        raise IllConditionedError("tangent Gram system is ill-conditioned")
    coef, *_ = np.linalg.lstsq(j, target.ravel(), rcond=None)
    return j, layout, coef


def project_tangent(base: TBFTensor, x) -> tuple[np.ndarray, TangentParams]:
    """Orthogonal projection of ``x`` onto the tangent space at ``base``.

    Returns the projected dense tensor and its tangent coordinates, with
    transfer velocities in the gauge used by :func:`jacobian`.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != base.dims:
        raise ValueError(f"shape {x.shape} does not match {base.dims}")
    comp = complements(base)
    j, layout, coef = _solve_tangent(base, comp, x)
    t = layout.to_params(coef, base_params(base))
    return (j @ coef).reshape(base.dims), t


def param_norm(p: ChartParams) -> float:
    """Sum of Frobenius norms of the transfer tensors plus spectral norms of the leaf maps."""
    total = sum(float(np.linalg.norm(c.ravel())) for c in p.transfer.values())
    for m in p.leaf_maps.values():
        if m.size:
            total += float(np.linalg.norm(m, 2))
    return total


def transfer_conditioning(x: TBFTensor) -> float:
    """Smallest sigma_r / sigma_1 over all axis unfoldings, r the axis length (0 if rank deficient)."""
    worst = 1.0
    for node in x.tree.internal_nodes():
        core = x.transfer[node]
        for axis in range(core.ndim):
            m = axis_matricization(core, axis)
            s = np.linalg.svd(m, compute_uv=False)
            k = m.shape[0]
            if k == 0 or s.size < k or s[0] == 0:
                return 0.0
            worst = min(worst, float(s[k - 1] / s[0]))
    return worst
