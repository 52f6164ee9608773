"""Dimension partition trees.

A node is a sorted tuple of 1-based mode indices. The root is ``(1, ..., d)``
and the leaves are the singletons. Children of a node are kept in canonical
order (by smallest contained mode) so that transfer-tensor axes have a fixed
layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

Node = tuple[int, ...]

NON_PARTITION_CHILDREN = "NonPartitionChildren"
SINGLE_CHILD = "SingleChild"
NON_SINGLETON_LEAF = "NonSingletonLeaf"
ROOT_MISMATCH = "RootMismatch"


class InvalidTreeError(ValueError):
    """Raised when a candidate tree violates the partition-tree rules.

    ``violations`` is a list of ``(kind, node)`` pairs, one per violated
    clause, where ``kind`` is one of the module-level diagnostic names.
    """

    def __init__(self, violations: list[tuple[str, Node | None]]):
        self.violations = violations
        msg = "; ".join(f"{kind} at {_fmt(node)}" for kind, node in violations)
        super().__init__(msg)

    @property
    def kinds(self) -> set[str]:
        return {kind for kind, _ in self.violations}


class TreeParseError(ValueError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


def _fmt(node) -> str:
    if node is None:
        return "<tree>"
    return "{" + ",".join(str(i) for i in node) + "}"


def mode_set(indices: Iterable[int]) -> Node:
    """Return the canonical node tuple for ``indices``."""
    out = tuple(sorted(int(i) for i in indices))
    if not out:
        raise ValueError("mode set must be non-empty")
    if len(set(out)) != len(out):
        raise ValueError(f"duplicate modes in {out}")
    return out


@dataclass(frozen=True)
class DimensionTree:
    """Validated, immutable dimension partition tree.

    Build instances with :func:`validate_tree` or :func:`standard_tree`;
    the constructor does not check the partition rules.
    """

    d: int
    children: Mapping[Node, tuple[Node, ...]]
    _parent: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        parent = {}
        for node, kids in self.children.items():
            for kid in kids:
                parent[kid] = node
        object.__setattr__(self, "_parent", parent)

    def __eq__(self, other):
        if not isinstance(other, DimensionTree):
            return NotImplemented
        return self.d == other.d and dict(self.children) == dict(other.children)

    def __hash__(self):
        return hash((self.d, tuple(sorted(self.children.items()))))

    @property
    def root(self) -> Node:
        return tuple(range(1, self.d + 1))

    def nodes(self) -> list[Node]:
        """All nodes in pre-order (root first, children in canonical order)."""
        return list(self._walk(self.root))

    def _walk(self, node: Node) -> Iterator[Node]:
        yield node
        for kid in self.children.get(node, ()):
            yield from self._walk(kid)

    def post_order(self) -> list[Node]:
        out: list[Node] = []

        def visit(node):
            for kid in self.children.get(node, ()):
                visit(kid)
            out.append(node)

        visit(self.root)
        return out

    def internal_nodes(self) -> list[Node]:
        return [n for n in self.nodes() if len(n) > 1]

    def leaves(self) -> list[Node]:
        return [(j,) for j in range(1, self.d + 1)]

    def is_leaf(self, node: Node) -> bool:
        return len(node) == 1

    def sons(self, node: Node) -> tuple[Node, ...]:
        return tuple(self.children.get(node, ()))

    def parent(self, node: Node) -> Node | None:
        return self._parent.get(node)


def validate_tree(root: Sequence[int], children: Mapping) -> DimensionTree:
    """Check a raw node/children description and return a validated tree.

    ``children`` maps nodes (any iterable of ints) to lists of child nodes.
    Every violated clause is collected before raising, so a single bad node
    may produce more than one diagnostic.
    """
    root_node = mode_set(root)
    d = len(root_node)
    raw = {mode_set(k): [mode_set(c) for c in v] for k, v in children.items()}
    violations: list[tuple[str, Node | None]] = []

    if root_node != tuple(range(1, d + 1)):
        violations.append((ROOT_MISMATCH, root_node))

    canonical: dict[Node, tuple[Node, ...]] = {}
    seen: set[Node] = set()
    stack = [root_node]
    while stack:
        node = stack.pop()
        if node in seen:
            violations.append((NON_PARTITION_CHILDREN, node))
            continue
        seen.add(node)
        kids = raw.get(node, [])
        if len(node) == 1:
            if kids:
                violations.append((NON_SINGLETON_LEAF, node))
            continue
        if len(kids) == 0:
            violations.append((NON_SINGLETON_LEAF, node))
            continue
        if len(kids) == 1:
            violations.append((SINGLE_CHILD, node))
        union: list[int] = [i for kid in kids for i in kid]
        if len(union) != len(set(union)) or set(union) != set(node):
            violations.append((NON_PARTITION_CHILDREN, node))
            continue
        ordered = tuple(sorted(kids, key=lambda c: c[0]))
        canonical[node] = ordered
        stack.extend(reversed(ordered))

    for node in raw:
        if node not in seen:
            violations.append((NON_PARTITION_CHILDREN, node))

    if violations:
        raise InvalidTreeError(violations)
    return DimensionTree(d, canonical)


def standard_tree(kind: str, d: int) -> DimensionTree:
    """Tucker (star), tensor-train (chain) or balanced binary tree over ``d`` modes."""
    if d < 2:
        raise ValueError("standard trees need d >= 2")
    root = tuple(range(1, d + 1))
    children: dict[Node, list[Node]] = {}
    if kind == "tucker":
        children[root] = [(j,) for j in root]
    elif kind == "tt":
        for j in range(1, d):
            children[tuple(range(j, d + 1))] = [(j,), tuple(range(j + 1, d + 1))]
    elif kind == "balanced":

        def split(node):
            if len(node) == 1:
                return
            half = (len(node) + 1) // 2
            left, right = node[:half], node[half:]
            children[node] = [left, right]
            split(left)
            split(right)

        split(root)
    else:
        raise ValueError(f"unknown tree kind {kind!r}")
    return validate_tree(root, children)


def serialize_tree(tree: DimensionTree) -> str:
    lines: list[str] = []

    def emit(node, depth):
        kids = tree.sons(node)
        idx = ",".join(str(i) for i in node)
        lines.append(f"{'  ' * depth}NODE {idx} CHILDREN {len(kids)}")
        for kid in kids:
            emit(kid, depth + 1)

    emit(tree.root, 0)
    return "\n".join(lines) + "\n"


def parse_tree(text: str | Sequence[str], first_line: int = 1) -> DimensionTree:
    """Parse the indented ``NODE ... CHILDREN k`` format.

    Indentation is ignored; structure comes from the child counts.
    """
    lines = text.splitlines() if isinstance(text, str) else list(text)
    entries = []
    for offset, raw in enumerate(lines):
        if not raw.strip():
            continue
        lineno = first_line + offset
        parts = raw.split()
        if len(parts) != 4 or parts[0] != "NODE" or parts[2] != "CHILDREN":
            raise TreeParseError(f"expected 'NODE <indices> CHILDREN <k>', got {raw.strip()!r}", lineno)
        try:
            node = mode_set(int(tok) for tok in parts[1].split(",") if tok)
            count = int(parts[3])
        except ValueError as exc:
            raise TreeParseError(str(exc), lineno) from None
        if count < 0:
            raise TreeParseError("negative child count", lineno)
        entries.append((lineno, node, count))
    if not entries:
        raise TreeParseError("empty tree description", first_line)

    children: dict[Node, list[Node]] = {}
    pos = 0

    def read():
        nonlocal pos
        if pos >= len(entries):
            last = entries[-1][0]
            raise TreeParseError("unexpected end of tree description", last + 1)
        lineno, node, count = entries[pos]
        pos += 1
        kids = []
        for _ in range(count):
            kid_line = entries[pos][0] if pos < len(entries) else lineno
            kid = read()
            if not set(kid) <= set(node):
                raise TreeParseError(f"child {_fmt(kid)} is not a subset of {_fmt(node)}", kid_line)
            kids.append(kid)
        if kids:
            if node in children:
                raise TreeParseError(f"node {_fmt(node)} listed twice", lineno)
            children[node] = kids
        return node

    root = read()
    if pos != len(entries):
        raise TreeParseError("trailing lines after the root subtree", entries[pos][0])
    try:
        return validate_tree(root, children)
    except InvalidTreeError as exc:
        raise TreeParseError(str(exc), entries[0][0]) from exc


def partition_of(tree: DimensionTree, node: Node) -> list[Node]:
    """The node together with the siblings and ancestors' siblings covering D."""
    blocks = [node]
    cur = node
    while (par := tree.parent(cur)) is not None:
        blocks.extend(s for s in tree.sons(par) if s != cur)
        cur = par
    return sorted(blocks, key=lambda b: b[0])
