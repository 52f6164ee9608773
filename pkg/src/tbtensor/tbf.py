"""Tensors in tree-based format.

A :class:`TBFTensor` stores one frame per leaf (``n_j x r_j``) and one
transfer tensor per internal node with axes ``(parent, child_1, ..., child_k)``
in canonical child order. The root transfer tensor has a parent axis of
length 1 (length 0 only for the reserved zero representation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dense import DEFAULT_TOL, fix_signs, matricize, rank_threshold, svd_sorted
from .tree import DimensionTree, Node

TBRank = dict  # Node -> int


class RankMismatchError(ValueError):
    pass


class InadmissibleRankError(ValueError):
    def __init__(self, report: "AdmissibilityReport"):
        self.report = report
        super().__init__("inadmissible rank tuple: " + "; ".join(str(v) for v in report.violations))


@dataclass(frozen=True)
class TBFTensor:
    tree: DimensionTree
    frames: Mapping[int, np.ndarray]
    transfer: Mapping[Node, np.ndarray]
    orthonormal: bool = False

    def __post_init__(self):
        for j in range(1, self.tree.d + 1):
            if j not in self.frames:
                raise ValueError(f"missing frame for leaf {j}")
        for node in self.tree.internal_nodes():
            if node not in self.transfer:
                raise ValueError(f"missing transfer tensor for {node}")
            core = self.transfer[node]
            kids = self.tree.sons(node)
            if core.ndim != len(kids) + 1:
                raise RankMismatchError(f"transfer tensor at {node} has {core.ndim} axes, expected {len(kids) + 1}")
            for axis, kid in enumerate(kids, start=1):
                if core.shape[axis] != self.rank_of(kid):
                    raise RankMismatchError(
                        f"transfer tensor at {node}: axis {axis} has length {core.shape[axis]}, "
                        f"child {kid} has rank {self.rank_of(kid)}")
        root = self.transfer[self.tree.root]
        if root.shape[0] > 1:
            raise RankMismatchError("root rank must be 1")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(self.frames[j].shape[0] for j in range(1, self.tree.d + 1))

    def rank_of(self, node: Node) -> int:
        if len(node) == 1:
            return self.frames[node[0]].shape[1]
        return self.transfer[node].shape[0]

    def ranks(self) -> TBRank:
        return {node: self.rank_of(node) for node in self.tree.nodes()}

    @property
    def is_zero_representation(self) -> bool:
        return self.rank_of(self.tree.root) == 0

    def replace(self, frames=None, transfer=None, orthonormal=None) -> "TBFTensor":
        return TBFTensor(self.tree,
                         dict(self.frames if frames is None else frames),
                         dict(self.transfer if transfer is None else transfer),
                         self.orthonormal if orthonormal is None else orthonormal)


def combine(core: np.ndarray, kid_arrays, kids, node: Node) -> np.ndarray:
    """Contract a transfer tensor with child bases.

    Child arrays have shape ``(*n_modes_of_child, r_child)``; the result has
    shape ``(*n_modes_of_node, r_node)`` with modes in increasing order.
    """
    nk = len(kids)
    operands: list = [core, list(range(nk + 1))]
    for i, (arr, kid) in enumerate(zip(kid_arrays, kids)):
        operands += [arr, [nk + 1 + m for m in kid] + [i + 1]]
    out = [nk + 1 + m for m in node] + [0]
    return np.einsum(*operands, out, optimize=True)


def node_bases(x: TBFTensor) -> dict[Node, np.ndarray]:
    """Dense basis arrays ``(*n_alpha, r_alpha)`` for every node, leaves to root."""
    out: dict[Node, np.ndarray] = {}
    for node in x.tree.post_order():
        if len(node) == 1:
            out[node] = np.asarray(x.frames[node[0]], dtype=float)
        else:
            kids = x.tree.sons(node)
            out[node] = combine(x.transfer[node], [out[k] for k in kids], kids, node)
    return out


def evaluate(x: TBFTensor) -> np.ndarray:
    if x.is_zero_representation:
        return np.zeros(x.dims)
    root = node_bases(x)[x.tree.root]
    return root[..., 0]


def zero_representation(tree: DimensionTree, dims) -> TBFTensor:
    frames = {j: np.zeros((dims[j - 1], 0)) for j in range(1, tree.d + 1)}
    transfer = {node: np.zeros((0,) * (len(tree.sons(node)) + 1)) for node in tree.internal_nodes()}
    return TBFTensor(tree, frames, transfer, orthonormal=True)


@dataclass
class Compression:
    """Result of a hierarchical SVD: the tensor plus per-node diagnostics."""

    tensor: TBFTensor
    singular_values: dict = field(default_factory=dict)
    kept: dict = field(default_factory=dict)

    def discarded(self, node: Node) -> float:
        s = self.singular_values[node]
        return float(np.sqrt(np.sum(s[self.kept[node]:] ** 2)))

    @property
    def error_bound(self) -> float:
        total = sum(self.discarded(n) ** 2 for n in self.singular_values)
        return math.sqrt(total)


def _check_dims(v: np.ndarray, tree: DimensionTree):
    if v.ndim != tree.d:
        raise ValueError(f"tensor has order {v.ndim}, tree has {tree.d} modes")


def hierarchical_svd(v, tree: DimensionTree, tol: float = 0.0, ranks: Mapping | None = None) -> Compression:
    """Compress ``v`` into tree-based format from independent unfolding SVDs.

    Each non-root node gets the dominant left singular vectors of its own
    unfolding of ``v``; the count is set by ``tol`` (relative to the node's
    largest singular value) and capped by ``ranks`` when given. Transfer
    tensors are the coordinates of each node basis in the product of its
    children's bases.
    """
    v = np.asarray(v, dtype=float)
    _check_dims(v, tree)
    ranks = {} if ranks is None else dict(ranks)
    bases: dict[Node, np.ndarray] = {}
    sigmas: dict[Node, np.ndarray] = {}
    kept: dict[Node, int] = {}
    exact = True
    for node in tree.nodes()[1:]:
        m = matricize(v, node)
        u, s, _ = svd_sorted(m)
        sigmas[node] = s
        r = 0 if (s.size == 0 or s[0] == 0.0) else int(np.count_nonzero(s > rank_threshold(s, tol, m.shape)))
        if node in ranks:
            r = min(r, int(ranks[node]))
        kept[node] = r
        if r and s[r:].size and s[r] > rank_threshold(s, 0.0, m.shape):
            exact = False
        shape = tuple(v.shape[i - 1] for i in node)
        bases[node] = fix_signs(u[:, :r]).reshape(shape + (r,))

    if not np.any(v) or any(r == 0 for r in kept.values()):
        return Compression(zero_representation(tree, v.shape), sigmas, {n: 0 for n in kept})

    bases[tree.root] = v[..., None]
    transfer = {}
    for node in tree.internal_nodes():
        kids = tree.sons(node)
        transfer[node] = _coordinates(bases[node], [bases[k] for k in kids], kids, node)
    frames = {j: bases[(j,)].reshape(v.shape[j - 1], -1) for j in range(1, tree.d + 1)}
    # implied node bases are orthonormal only when nothing beyond round-off was cut
    x = TBFTensor(tree, frames, transfer, orthonormal=exact)
    return Compression(x, sigmas, kept)


def _coordinates(parent: np.ndarray, kid_arrays, kids, node: Node) -> np.ndarray:
    """Project each parent basis vector onto the product of orthonormal child bases."""
    nk = len(kids)
    operands: list = [parent, [nk + 1 + m for m in node] + [0]]
    for i, (arr, kid) in enumerate(zip(kid_arrays, kids)):
        operands += [arr, [nk + 1 + m for m in kid] + [i + 1]]
    return np.einsum(*operands, list(range(nk + 1)), optimize=True)


def from_dense(v, tree: DimensionTree, tol: float = 0.0, ranks: Mapping | None = None) -> TBFTensor:
    """Tree-based representation of ``v``; ``tol = 0`` keeps every non-round-off direction.

    When rank caps or ``tol`` cut anything, the result is pruned so that its
    transfer tensors are full rank and its ranks admissible.
    """
    x = hierarchical_svd(v, tree, tol, ranks).tensor
    return x if x.orthonormal else prune(x)


def tb_rank(v, tree: DimensionTree, tol: float = DEFAULT_TOL) -> TBRank:
    v = np.asarray(v, dtype=float)
    _check_dims(v, tree)
    out = {tree.root: int(bool(np.any(v)))}
    for node in tree.nodes()[1:]:
        m = matricize(v, node)
        s = np.linalg.svd(m, compute_uv=False)
        out[node] = 0 if s[0] == 0.0 else int(np.count_nonzero(s > rank_threshold(s, tol, m.shape)))
    return out


# --- admissibility and full-rank diagnostics ---------------------------------

ROOT_RANK = "root_rank_one"
LEAF_DIMENSION = "leaf_dimension"
PARENT_BOUND = "parent_bound"
CHILD_BOUND = "child_bound"


def _braces(node: Node) -> str:
    return "{" + ",".join(map(str, node)) + "}"


@dataclass(frozen=True)
class Violation:
    condition: str
    node: Node
    detail: str

    def __str__(self):
        return f"{self.condition} at {_braces(self.node)}: {self.detail}"


@dataclass
class AdmissibilityReport:
    violations: list

    @property
    def admissible(self) -> bool:
        return not self.violations

    def conditions(self) -> set[str]:
        return {v.condition for v in self.violations}

    def passed(self, condition: str) -> bool:
        return condition not in self.conditions()


def check_admissible(ranks: Mapping, tree: DimensionTree, dims) -> AdmissibilityReport:
    """Check the necessary conditions for a rank tuple to be realizable.

    r_D = 1; r_j <= n_j at leaves; r_a <= prod of children ranks; and each
    child rank at most r_a times the product of its siblings' ranks.
    """
    out = []
    r = {tuple(k): int(v) for k, v in ranks.items()}
    missing = [n for n in tree.nodes() if n not in r]
    if missing:
        raise ValueError(f"ranks missing for nodes {missing}")
    if r[tree.root] != 1:
        out.append(Violation(ROOT_RANK, tree.root, f"r_D = {r[tree.root]}"))
    for j in range(1, tree.d + 1):
        if r[(j,)] > dims[j - 1]:
            out.append(Violation(LEAF_DIMENSION, (j,), f"r = {r[(j,)]} > n = {dims[j - 1]}"))
    for node in tree.internal_nodes():
        kids = tree.sons(node)
        prod = math.prod(r[k] for k in kids)
        if r[node] > prod:
            out.append(Violation(PARENT_BOUND, node, f"r = {r[node]} > {prod}"))
        for kid in kids:
            bound = r[node] * math.prod(r[k] for k in kids if k != kid)
            if r[kid] > bound:
                out.append(Violation(CHILD_BOUND, kid, f"r = {r[kid]} > {bound} (parent {_braces(node)})"))
    return AdmissibilityReport(out)


@dataclass(frozen=True)
class AxisRank:
    node: Node
    axis: int
    rank: int
    max_rank: int
    smallest_ratio: float

    @property
    def passed(self) -> bool:
        return self.rank == self.max_rank


@dataclass
class FullRankReport:
    entries: list
    tol: float

    @property
    def full_rank(self) -> bool:
        return all(e.passed for e in self.entries)

    def failures(self) -> list:
        return [e for e in self.entries if not e.passed]


def axis_matricization(core: np.ndarray, axis: int) -> np.ndarray:
    rest = math.prod(n for k, n in enumerate(core.shape) if k != axis)
    return np.moveaxis(core, axis, 0).reshape(core.shape[axis], rest)


def check_full_rank(x: TBFTensor, tol: float = DEFAULT_TOL) -> FullRankReport:
    """For each transfer tensor and each axis, test full row rank of the axis unfolding."""
    entries = []
    for node in x.tree.internal_nodes():
        core = x.transfer[node]
        for axis in range(core.ndim):
            m = axis_matricization(core, axis)
            # full row rank: every basis vector along this axis is needed
            max_rank = m.shape[0]
            if max_rank == 0:
                entries.append(AxisRank(node, axis, 0, 0, 1.0))
                continue
            s = np.linalg.svd(m, compute_uv=False)
            rank = 0 if s[0] == 0.0 else int(np.count_nonzero(s > tol * s[0]))
            ratio = 0.0 if (s[0] == 0.0 or s.size < max_rank) else float(s[max_rank - 1] / s[0])
            entries.append(AxisRank(node, axis, rank, max_rank, ratio))
    return FullRankReport(entries, tol)


# --- orthonormalization and truncation ---------------------------------------

def _qr_positive(m: np.ndarray):
    q, r = np.linalg.qr(m)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs, r * signs[:, None]


def _absorb(core: np.ndarray, axis: int, r: np.ndarray) -> np.ndarray:
    # new[..., k, ...] = sum_i core[..., i, ...] r[k, i]
    moved = np.tensordot(r, np.moveaxis(core, axis, 0), axes=([1], [0]))
    return np.moveaxis(moved, 0, axis)


def _factor(m: np.ndarray, tol: float | None):
    """Return (Q, R) with m = Q @ R and orthonormal Q; with ``tol`` drop small directions."""
    if tol is None:
        return _qr_positive(m)
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((m.shape[0], 0)), np.zeros((0, m.shape[1]))
    r = int(np.count_nonzero(s > tol * s[0]))
    if r == m.shape[1]:
        # nothing to prune; QR keeps an orthonormal input unchanged
        return _qr_positive(m)
    u = fix_signs(svd_sorted(m)[0][:, :r])
    return u, u.T @ m


def orthonormalize(x: TBFTensor, tol: float | None = None) -> TBFTensor:
    """Leaves-to-root QR sweep; the represented tensor is unchanged.

    With ``tol`` set, rank-revealing SVDs replace the QR factorizations and
    directions below ``tol * sigma_max`` are pruned.
    """
    if x.is_zero_representation:
        return x.replace(orthonormal=True)
    tree = x.tree
    frames = {}
    transfer = {}
    factors: dict[Node, np.ndarray] = {}
    for node in tree.post_order():
        if len(node) == 1:
            q, r = _factor(np.asarray(x.frames[node[0]], dtype=float), tol)
            frames[node[0]] = q
            factors[node] = r
            continue
        core = np.asarray(x.transfer[node], dtype=float)
        for axis, kid in enumerate(tree.sons(node), start=1):
            core = _absorb(core, axis, factors[kid])
        if node == tree.root:
            transfer[node] = core
            continue
        q, r = _factor(core.reshape(core.shape[0], -1).T, tol)
        transfer[node] = q.T.reshape((q.shape[1],) + core.shape[1:])
        factors[node] = r
    out = TBFTensor(tree, frames, transfer, orthonormal=True)
    if any(out.rank_of(n) == 0 for n in tree.nodes()) or not np.any(out.transfer[tree.root]):
        return zero_representation(tree, x.dims)
    return out


def _prune_children(x: TBFTensor, tol: float) -> TBFTensor:
    """Root-to-leaves sweep removing rank-deficient child axes of transfer tensors.

    Each child axis of a transfer tensor is restricted to the range of its
    matricization and the child basis is mapped accordingly, which leaves
    the represented tensor unchanged.
    """
    tree = x.tree
    frames = dict(x.frames)
    transfer = {n: np.asarray(c, dtype=float) for n, c in x.transfer.items()}
    for node in tree.nodes():
        if len(node) == 1:
            continue
        for axis, kid in enumerate(tree.sons(node), start=1):
            core = transfer[node]
            u, s, _ = svd_sorted(axis_matricization(core, axis))
            r = 0 if s.size == 0 or s[0] == 0.0 else int(np.count_nonzero(s > tol * s[0]))
            if r == core.shape[axis]:
                continue
            u = u[:, :r]
            transfer[node] = _absorb(core, axis, u.T)
            if len(kid) == 1:
                frames[kid[0]] = frames[kid[0]] @ u
            else:
                transfer[kid] = _absorb(transfer[kid], 0, u.T)
    return TBFTensor(tree, frames, transfer, orthonormal=False)


def prune(x: TBFTensor, tol: float = DEFAULT_TOL) -> TBFTensor:
    """Orthonormal representation of the same tensor whose transfer tensors are all full rank."""
    for _ in range(x.tree.d + 1):
        x = orthonormalize(x, tol)
        if x.is_zero_representation or check_full_rank(x, tol).full_rank:
            return x
        x = _prune_children(x, tol)
    return orthonormalize(x, tol)


def truncate(x, target: Mapping, tol: float = 0.0) -> tuple[TBFTensor, float]:
    """Best-effort projection onto tensors of TB rank at most ``target``.

    Returns the orthonormal truncated tensor and the a-priori bound
    ``sqrt(sum over nodes of discarded squared singular values)``.
    """
    v = evaluate(x) if isinstance(x, TBFTensor) else np.asarray(x, dtype=float)
    tree = x.tree if isinstance(x, TBFTensor) else None
    if tree is None:
        raise TypeError("truncating a dense tensor needs a tree; use truncate_dense")
    return truncate_dense(v, tree, target, tol)


def truncate_dense(v, tree: DimensionTree, target: Mapping, tol: float = 0.0) -> tuple[TBFTensor, float]:
    v = np.asarray(v, dtype=float)
    report = check_admissible(target, tree, v.shape)
    if not report.admissible:
        raise InadmissibleRankError(report)
    comp = hierarchical_svd(v, tree, tol, {n: r for n, r in target.items() if n != tree.root})
    return prune(comp.tensor), comp.error_bound


# --- nestedness ---------------------------------------------------------------

@dataclass(frozen=True)
class NestingEntry:
    node: Node
    rank: int
    product_rank: int
    inclusion_defect: float
    child_span_defect: float
    tol: float

    @property
    def holds(self) -> bool:
        return self.inclusion_defect < self.tol and self.child_span_defect < self.tol

    @property
    def strict(self) -> bool:
        return self.rank < self.product_rank


@dataclass
class NestednessReport:
    entries: list

    @property
    def holds(self) -> bool:
        return all(e.holds for e in self.entries)


def _unfold_node_basis(arr: np.ndarray) -> np.ndarray:
    return arr.reshape(-1, arr.shape[-1])


def _subspace_gap(q1: np.ndarray, q2: np.ndarray) -> float:
    """sin of the largest principal angle between two orthonormal frames (1 if dims differ)."""
    if q1.shape[1] != q2.shape[1]:
        return 1.0
    if q1.shape[1] == 0:
        return 0.0
    return float(np.linalg.norm(q1 - q2 @ (q2.T @ q1), 2))


def nestedness_check(v, tree: DimensionTree, tol: float = 1e-10, rank_tol: float = DEFAULT_TOL) -> NestednessReport:
    """Verify inclusion of each node's minimal subspace in the product of its children's.

    Also checks that contracting the node's basis vectors against the bases
    of the sibling subspaces spans each child subspace.
    """
    v = np.asarray(v, dtype=float)
    _check_dims(v, tree)
    bases = {}
    for node in tree.nodes()[1:]:
        m = matricize(v, node)
        u, s, _ = svd_sorted(m)
        r = 0 if s[0] == 0.0 else int(np.count_nonzero(s > rank_threshold(s, rank_tol, m.shape)))
        bases[node] = u[:, :r].reshape(tuple(v.shape[i - 1] for i in node) + (r,))
    nv = np.linalg.norm(v)
    bases[tree.root] = (v / nv if nv else np.zeros_like(v))[..., None][..., : int(nv > 0)]

    entries = []
    for node in tree.internal_nodes():
        kids = tree.sons(node)
        parent = bases[node]
        coords = _coordinates(parent, [bases[k] for k in kids], kids, node)
        projected = combine(coords, [bases[k] for k in kids], kids, node)
        pmat = _unfold_node_basis(parent)
        inclusion = float(np.linalg.norm(pmat - _unfold_node_basis(projected), 2)) if pmat.size else 0.0
        child_defect = 0.0
        for i, kid in enumerate(kids):
            # contract u_i against sibling bases -> vectors over the kid's modes
            sibs = [k for k in kids if k != kid]
            nk = len(sibs)
            ops: list = [parent, [nk + 1 + m for m in node] + [0]]
            for s_i, sib in enumerate(sibs):
                ops += [bases[sib], [nk + 1 + m for m in sib] + [s_i + 1]]
            out_lbl = [nk + 1 + m for m in kid] + [0] + list(range(1, nk + 1))
            pieces = np.einsum(*ops, out_lbl, optimize=True)
            kshape = tuple(v.shape[m - 1] for m in kid)
            gen = pieces.reshape(math.prod(kshape), -1)
            q = _column_basis(gen, rank_tol)
            child_defect = max(child_defect, _subspace_gap(q, _unfold_node_basis(bases[kid])))
        entries.append(NestingEntry(node, parent.shape[-1], math.prod(bases[k].shape[-1] for k in kids),
                                    inclusion, child_defect, tol))
    return NestednessReport(entries)


def _column_basis(m: np.ndarray, tol: float) -> np.ndarray:
    if m.size == 0:
        return np.zeros((m.shape[0], 0))
    u, s, _ = svd_sorted(m)
    if s[0] == 0.0:
        return np.zeros((m.shape[0], 0))
    return u[:, : int(np.count_nonzero(s > rank_threshold(s, tol, m.shape)))]


def complement_tensors(x: TBFTensor, node: Node) -> np.ndarray:
    """Complement tensors of a non-root node as rows of an ``(r_node, N_rest)`` matrix.

    Row ``i`` holds the tensor over the modes outside ``node`` that pairs
    with the node's ``i``-th basis vector, so that the represented tensor is
    ``sum_i u_i (x) U_i``. For a full-rank representation the rows are
    linearly independent.
    """
    if node == x.tree.root:
        raise ValueError("the root has no complement tensors")
    b = node_bases(x)[node]
    b = b.reshape(-1, b.shape[-1])
    m = matricize(evaluate(x), node)
    coef, *_ = np.linalg.lstsq(b, m, rcond=None)
    return coef
