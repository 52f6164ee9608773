"""Plain-text file formats.

All scalars are written with 17 significant digits so that a write/read
cycle reproduces every float exactly. Arrays are written row-major, one
line of values per header. Readers accept any whitespace layout.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .dynamics import SumOfProductsOperator, Trajectory
from .tbf import TBFTensor
from .tree import TreeParseError, mode_set, parse_tree, serialize_tree


class FormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


def fmt(x: float) -> str:
    return "%.17g" % float(x)


def _values(arr) -> str:
    return " ".join(fmt(x) for x in np.asarray(arr, dtype=float).ravel())


class _Tokens:
    """Cursor over whitespace-separated tokens that remembers line numbers."""

    def __init__(self, lines: list[str], start: int = 0):
        self.lines = lines
        self.items = [(i + 1, tok) for i, line in enumerate(lines[start:], start=start) for tok in line.split()]
        self.pos = 0

    @property
    def line(self) -> int | None:
        if self.pos < len(self.items):
            return self.items[self.pos][0]
        return len(self.lines)

    def done(self) -> bool:
        return self.pos >= len(self.items)

    def peek(self) -> str | None:
        return None if self.done() else self.items[self.pos][1]

    def word(self, expected: str | None = None) -> str:
        if self.done():
            raise FormatError("unexpected end of file", self.line)
        tok = self.items[self.pos][1]
        if expected is not None and tok != expected:
            raise FormatError(f"expected {expected!r}, got {tok!r}", self.line)
        self.pos += 1
        return tok

    def integer(self, minimum: int = 0) -> int:
        line = self.line
        tok = self.word()
        try:
            val = int(tok)
        except ValueError:
            raise FormatError(f"expected an integer, got {tok!r}", line) from None
        if val < minimum:
            raise FormatError(f"integer {val} is below {minimum}", line)
        return val

    def floats(self, count: int) -> np.ndarray:
        out = np.empty(count)
        for k in range(count):
            line = self.line
            tok = self.word()
            try:
                out[k] = float(tok)
            except ValueError:
                raise FormatError(f"expected a number, got {tok!r}", line) from None
            if not math.isfinite(out[k]):
                raise FormatError(f"non-finite value {tok!r}", line)
        return out

    def finish(self):
        if not self.done():
            raise FormatError(f"trailing content {self.peek()!r}", self.line)


def _read_text(path) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write_text(path, text: str):
    Path(path).write_text(text, encoding="utf-8")


# --- dense -------------------------------------------------------------------

def dumps_dense(v) -> str:
    v = np.asarray(v, dtype=float)
    header = " ".join(["DENSE", str(v.ndim)] + [str(n) for n in v.shape])
    return header + "\n" + _values(v) + "\n"


def loads_dense(text: str) -> np.ndarray:
    toks = _Tokens(text.splitlines())
    toks.word("DENSE")
    d = toks.integer(1)
    dims = tuple(toks.integer(1) for _ in range(d))
    vals = toks.floats(math.prod(dims))
    toks.finish()
    return vals.reshape(dims)


def read_dense(path) -> np.ndarray:
    return loads_dense(_read_text(path))


def write_dense(path, v):
    _write_text(path, dumps_dense(v))


# --- TBF ---------------------------------------------------------------------

def dumps_tbf(x: TBFTensor) -> str:
    lines = ["TBF", serialize_tree(x.tree).rstrip("\n")]
    for j in range(1, x.tree.d + 1):
        f = np.asarray(x.frames[j], dtype=float)
        lines.append(f"FRAME {j} {f.shape[0]} {f.shape[1]}")
        lines.append(_values(f))
    for node in x.tree.nodes():
        if len(node) == 1:
            continue
        c = np.asarray(x.transfer[node], dtype=float)
        idx = ",".join(str(i) for i in node)
        lines.append(f"TRANSFER {idx} " + " ".join(str(n) for n in c.shape))
        lines.append(_values(c))
    return "\n".join(lines) + "\n"


def loads_tbf(text: str) -> TBFTensor:
    lines = text.splitlines()
    first = next((i for i, line in enumerate(lines) if line.strip()), None)
    if first is None or lines[first].strip() != "TBF":
        raise FormatError("expected 'TBF' header", 1 if first is None else first + 1)
    end = next((i for i in range(first + 1, len(lines))
                if lines[i].split()[:1] in (["FRAME"], ["TRANSFER"])), len(lines))
    try:
        tree = parse_tree(lines[first + 1:end], first_line=first + 2)
    except TreeParseError as exc:
        raise FormatError(str(exc)) from exc

    toks = _Tokens(lines, end)
    frames: dict[int, np.ndarray] = {}
    transfer = {}
    while not toks.done():
        line = toks.line
        kind = toks.word()
        if kind == "FRAME":
            j = toks.integer(1)
            n = toks.integer(1)
            r = toks.integer(0)
            if j > tree.d or j in frames:
                raise FormatError(f"unexpected frame for leaf {j}", line)
            frames[j] = toks.floats(n * r).reshape(n, r)
        elif kind == "TRANSFER":
            try:
                node = mode_set(int(t) for t in toks.word().split(",") if t)
            except ValueError as exc:
                raise FormatError(str(exc), line) from None
            if node not in tree.internal_nodes() or node in transfer:
                raise FormatError(f"unexpected transfer tensor for {node}", line)
            shape = tuple(toks.integer(0) for _ in range(len(tree.sons(node)) + 1))
            transfer[node] = toks.floats(math.prod(shape)).reshape(shape)
        else:
            raise FormatError(f"expected FRAME or TRANSFER, got {kind!r}", line)
    try:
        return TBFTensor(tree, frames, transfer)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def read_tbf(path) -> TBFTensor:
    return loads_tbf(_read_text(path))


def write_tbf(path, x: TBFTensor):
    _write_text(path, dumps_tbf(x))


# --- sum-of-products operators ------------------------------------------------

def dumps_sop(op: SumOfProductsOperator) -> str:
    lines = [f"SOP {op.d} {len(op.terms)}"]
    for w, mats in op.terms:
        lines.append(fmt(w))
        for a in mats:
            lines.append(f"MAT {a.shape[0]}")
            lines.append(_values(a))
    return "\n".join(lines) + "\n"


def loads_sop(text: str) -> SumOfProductsOperator:
    toks = _Tokens(text.splitlines())
    toks.word("SOP")
    d = toks.integer(1)
    count = toks.integer(0)
    terms = []
    for _ in range(count):
        w = float(toks.floats(1)[0])
        mats = []
        for _ in range(d):
            toks.word("MAT")
            n = toks.integer(1)
            mats.append(toks.floats(n * n).reshape(n, n))
        terms.append((w, mats))
    toks.finish()
    try:
        return SumOfProductsOperator(terms)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def read_sop(path) -> SumOfProductsOperator:
    return loads_sop(_read_text(path))


def write_sop(path, op: SumOfProductsOperator):
    _write_text(path, dumps_sop(op))


# --- trajectories ---------------------------------------------------------------

def dumps_trajectory(rows) -> str:
    """``rows`` are ``(t, lam, norm, residual)`` tuples."""
    return "".join(" ".join(fmt(x) for x in row) + "\n" for row in rows)


def trajectory_rows(traj: Trajectory, amplitude, norm) -> list[tuple]:
    return [(t, amplitude(s), norm(s), r) for t, s, r in zip(traj.times, traj.states, traj.residuals)]
