"""Command-line interface.

    tbtensor compress --input v.dense --tree tt --tol 1e-8 --output v.tbf
    tbtensor ranks    --input v.dense --tree tree.txt
    tbtensor truncate --input v.tbf --ranks '*=2' --output w.tbf
    tbtensor project  --input v.tbf [--direction x.dense | --random] --output p.dense
    tbtensor evolve   --input v.tbf --operator a.sop --dt 1e-3 --t-end 1 --output traj.txt

Exit codes: 0 success, 2 invalid input or arguments, 3 numerical failure,
4 file errors.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import expm_multiply

from . import formats
from .dense import DEFAULT_TOL, frobenius_norm, inner
from .dynamics import (RankDegeneracy, SumOfProductsOperator, integrate_hartree, integrate_tangent_projected,
                       tbf_to_hartree)
from .geometry import (IllConditionedError, NotInNeighborhood, RankDeficiencyError, project_tangent,
                       tangent_basis, tangent_dimension)
from .tbf import (CHILD_BOUND, LEAF_DIMENSION, PARENT_BOUND, ROOT_RANK, InadmissibleRankError, RankMismatchError,
                  TBFTensor, check_admissible, check_full_rank, evaluate, hierarchical_svd, nestedness_check,
                  orthonormalize, tb_rank, truncate_dense)
from .tree import (DimensionTree, InvalidTreeError, Node, TreeParseError, mode_set, parse_tree,
                   standard_tree)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

TREE_KINDS = ("tucker", "tt", "balanced")
DENSE_ORACLE_LIMIT = 4096


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    tree: str | None = None
    tol: float = 0.0
    ranks: dict = field(default_factory=dict)
    dt: float | None = None
    t_end: float | None = None
    scheme: str = "rk4"
    seed: int = 0
    output: str | None = None
    operator: str | None = None
    method: str = "auto"
    direction: str | None = None
    random: bool = False

    def __post_init__(self):
        if self.tol < 0:
            raise UsageError("--tol must be non-negative")
        if self.command == "evolve" and (self.dt is None or self.dt <= 0):
            raise UsageError("--dt must be positive")


def fmt_node(node: Node) -> str:
    return "{" + ",".join(str(i) for i in node) + "}"


def parse_ranks(text: str | None) -> dict:
    """Parse ``node=r,...`` where a node is a comma-separated mode list.

    ``1,2=2,3=1`` sets node {1,2} to 2 and {3} to 1: every value is a single
    integer, so the comma after it starts the next node. ``*=r`` caps every
    node not listed explicitly.
    """
    if not text:
        return {}
    pieces = text.split("=")
    if len(pieces) < 2:
        raise UsageError(f"malformed --ranks {text!r}")
    out = {}
    key = pieces[0]
    for k, piece in enumerate(pieces[1:], start=1):
        last = k == len(pieces) - 1
        value, sep, nxt = piece.partition(",")
        if last == bool(sep):
            raise UsageError(f"malformed --ranks {text!r}")
        try:
            r = int(value)
            node = "*" if key.strip() == "*" else mode_set(int(t) for t in key.split(","))
        except ValueError:
            raise UsageError(f"malformed --ranks {text!r}") from None
        if r < 0:
            raise UsageError("ranks must be non-negative")
        out[node] = r
        key = nxt
    return out


def load_tree(spec: str | None, d: int) -> DimensionTree:
    if spec is None:
        raise UsageError("--tree is required")
    if spec in TREE_KINDS:
        return standard_tree(spec, d)
    tree = parse_tree(Path(spec).read_text(encoding="utf-8"))
    if tree.d != d:
        raise UsageError(f"tree has {tree.d} modes, tensor has {d}")
    return tree


def load_input(cfg: RunConfig):
    """Return ``(dense, tbf_or_None, tree)`` from a DENSE or TBF input file."""
    if cfg.input is None:
        raise UsageError("--input is required")
    text = Path(cfg.input).read_text(encoding="utf-8")
    head = text.split(None, 1)[0] if text.strip() else ""
    if head == "TBF":
        x = formats.loads_tbf(text)
        return evaluate(x), x, x.tree
    v = formats.loads_dense(text)
    return v, None, load_tree(cfg.tree, v.ndim)


def resolve_target(cfg_ranks: dict, tree: DimensionTree, current: dict) -> dict:
    default = cfg_ranks.get("*")
    target = {}
    for node in tree.nodes():
        if node == tree.root:
            target[node] = cfg_ranks.get(node, 1)
        elif node in cfg_ranks:
            target[node] = cfg_ranks[node]
        else:
            target[node] = current[node] if default is None else min(default, current[node])
    unknown = [n for n in cfg_ranks if n != "*" and n not in target]
    if unknown:
        raise UsageError("ranks given for nodes not in the tree: " + ", ".join(fmt_node(n) for n in unknown))
    return target


def _rel(err: float, ref: float) -> float:
    return err / ref if ref else float(err)


def _emit_output(cfg: RunConfig, text: str, out):
    if cfg.output:
        Path(cfg.output).write_text(text, encoding="utf-8")
        print(f"wrote {cfg.output}", file=out)
    else:
        out.write(text)


# --- commands ------------------------------------------------------------------

def cmd_compress(cfg: RunConfig, out) -> int:
    v, _, tree = load_input(cfg)
    caps = {n: r for n, r in cfg.ranks.items() if n != "*"}
    if "*" in cfg.ranks:
        caps.update({n: cfg.ranks["*"] for n in tree.nodes()[1:] if n not in caps})
    comp = hierarchical_svd(v, tree, cfg.tol, caps or None)
    x = comp.tensor
    err = frobenius_norm(evaluate(x) - v)
    print("node rank discarded", file=out)
    for node in tree.nodes():
        disc = comp.discarded(node) if node in comp.singular_values else 0.0
        print(f"{fmt_node(node)} {x.rank_of(node)} {formats.fmt(disc)}", file=out)
    print(f"error_bound {formats.fmt(comp.error_bound)}", file=out)
    print(f"error {formats.fmt(err)}", file=out)
    print(f"relative_error {formats.fmt(_rel(err, frobenius_norm(v)))}", file=out)
    _emit_output(cfg, formats.dumps_tbf(x), out)
    return EXIT_OK


def cmd_ranks(cfg: RunConfig, out) -> int:
    v, _, tree = load_input(cfg)
    tol = cfg.tol if cfg.tol > 0 else DEFAULT_TOL
    ranks = tb_rank(v, tree, tol)
    nest = {e.node: e for e in nestedness_check(v, tree, rank_tol=tol).entries}
    print("node rank nested inclusion_defect", file=out)
    for node in tree.nodes():
        e = nest.get(node)
        extra = "- -" if e is None else f"{'yes' if e.holds else 'no'} {formats.fmt(e.inclusion_defect)}"
        print(f"{fmt_node(node)} {ranks[node]} {extra}", file=out)
    if ranks[tree.root] == 0:
        print("admissibility: not applicable to the zero tensor", file=out)
        return EXIT_OK
    report = check_admissible(ranks, tree, v.shape)
    print(f"admissible {'yes' if report.admissible else 'no'}", file=out)
    for cond in (ROOT_RANK, LEAF_DIMENSION, PARENT_BOUND, CHILD_BOUND):
        print(f"  {cond} {'pass' if report.passed(cond) else 'fail'}", file=out)
    for viol in report.violations:
        print(f"  violation {viol}", file=out)
    return EXIT_OK


def cmd_truncate(cfg: RunConfig, out) -> int:
    v, _, tree = load_input(cfg)
    current = tb_rank(v, tree, DEFAULT_TOL)
    if current[tree.root] == 0:
        raise UsageError("cannot truncate the zero tensor")
    target = resolve_target(cfg.ranks, tree, current)
    x, bound = truncate_dense(v, tree, target, cfg.tol)
    err = frobenius_norm(evaluate(x) - v)
    print("node target rank", file=out)
    for node in tree.nodes():
        print(f"{fmt_node(node)} {target[node]} {x.rank_of(node)}", file=out)
    print(f"error_bound {formats.fmt(bound)}", file=out)
    print(f"error {formats.fmt(err)}", file=out)
    print(f"relative_error {formats.fmt(_rel(err, frobenius_norm(v)))}", file=out)
    _emit_output(cfg, formats.dumps_tbf(x), out)
    return EXIT_OK


def _base_point(cfg: RunConfig) -> TBFTensor:
    v, x, tree = load_input(cfg)
    if x is None:
        ranks = {n: r for n, r in cfg.ranks.items() if n != "*"} or None
        x = hierarchical_svd(v, tree, cfg.tol, ranks).tensor
    x = orthonormalize(x)
    if x.is_zero_representation or not check_full_rank(x).full_rank:
        raise RankDeficiencyError("base point is not of full TB rank")
    return x


def cmd_project(cfg: RunConfig, out) -> int:
    base = _base_point(cfg)
    vb = evaluate(base)
    if cfg.direction:
        target = formats.read_dense(cfg.direction)
        label = cfg.direction
    elif cfg.random:
        target = np.random.default_rng(cfg.seed).standard_normal(base.dims)
        label = f"random (seed {cfg.seed})"
    else:
        target = vb
        label = "base point"
    proj, _ = project_tangent(base, target)
    basis = tangent_basis(base)
    resid = target - proj
    ortho = max((abs(inner(resid, z)) for z in basis), default=0.0)
    again, _ = project_tangent(base, proj)
    print(f"direction {label}", file=out)
    print(f"tangent_dimension {tangent_dimension(base)}", file=out)
    print(f"norm_in {formats.fmt(frobenius_norm(target))}", file=out)
    print(f"norm_out {formats.fmt(frobenius_norm(proj))}", file=out)
    print(f"residual_orthogonality {formats.fmt(ortho)}", file=out)
    print(f"idempotence_defect {formats.fmt(frobenius_norm(again - proj))}", file=out)
    print(f"identity_defect {formats.fmt(frobenius_norm(proj - target))}", file=out)
    _emit_output(cfg, formats.dumps_dense(proj), out)
    return EXIT_OK


def _dense_oracle(op: SumOfProductsOperator, v0: np.ndarray, t_end: float) -> np.ndarray:
    return expm_multiply(t_end * op.dense_matrix(), v0.ravel()).reshape(v0.shape)


def cmd_evolve(cfg: RunConfig, out) -> int:
    if cfg.operator is None:
        raise UsageError("--operator is required")
    if cfg.t_end is None:
        raise UsageError("--t-end is required")
    op = formats.read_sop(cfg.operator)
    base = _base_point(cfg)
    if list(base.dims) != op.dims:
        raise UsageError(f"operator dims {op.dims} do not match tensor dims {list(base.dims)}")
    rank_one = all(r == 1 for r in base.ranks().values())
    method = cfg.method
    if method == "auto":
        method = "hartree" if rank_one else "projected"
    if method == "hartree":
        if not rank_one:
            raise UsageError("the Hartree method needs a rank-one initial tensor")
        traj = integrate_hartree(op, tbf_to_hartree(base), cfg.t_end, cfg.dt, cfg.scheme)
        rows = [(t, s.lam, math.prod(np.linalg.norm(f) for f in s.factors), r)
                for t, s, r in zip(traj.times, traj.states, traj.residuals)]
        final = traj.final.dense()
    else:
        traj = integrate_tangent_projected(op, base, cfg.t_end, cfg.dt, cfg.scheme)
        rows = []
        for t, x, r in zip(traj.times, traj.states, traj.residuals):
            v = evaluate(x)
            rows.append((t, frobenius_norm(v), frobenius_norm(v), r))
        final = evaluate(traj.final)
    print(f"method {method}", file=out)
    print(f"steps {len(traj.times) - 1}", file=out)
    print(f"final_norm {formats.fmt(frobenius_norm(final))}", file=out)
    print(f"max_residual {formats.fmt(max(traj.residuals))}", file=out)
    if math.prod(base.dims) <= DENSE_ORACLE_LIMIT:
        exact = _dense_oracle(op, evaluate(base), cfg.t_end)
        err = frobenius_norm(final - exact)
        print(f"oracle_relative_error {formats.fmt(_rel(err, frobenius_norm(exact)))}", file=out)
    _emit_output(cfg, formats.dumps_trajectory(rows), out)
    return EXIT_OK


COMMANDS = {
    "compress": cmd_compress,
    "ranks": cmd_ranks,
    "truncate": cmd_truncate,
    "project": cmd_project,
    "evolve": cmd_evolve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tbtensor", description="Tree-based tensor format toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, tree=True):
        p.add_argument("--input", required=True, help="DENSE or TBF input file")
        if tree:
            p.add_argument("--tree", help="tree file, or one of: " + ", ".join(TREE_KINDS))
        p.add_argument("--tol", type=float, default=0.0, help="relative singular-value cutoff")
        p.add_argument("--ranks", help="rank caps, e.g. '1=2,2,3=3' or '*=2'")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--output", help="output file (default: stdout)")

    common(sub.add_parser("compress", help="compress a dense tensor"))
    common(sub.add_parser("ranks", help="TB rank, admissibility and nestedness report"))
    common(sub.add_parser("truncate", help="truncate to target ranks"))
    p = sub.add_parser("project", help="project onto the tangent space at a base point")
    common(p)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--direction", help="DENSE file to project (default: the base point)")
    group.add_argument("--random", action="store_true", help="project a seeded Gaussian tensor")
    p = sub.add_parser("evolve", help="Dirac-Frenkel time integration")
    common(p)
    p.add_argument("--operator", required=True, help="SOP operator file")
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--scheme", choices=("rk4", "euler"), default="rk4")
    p.add_argument("--method", choices=("auto", "hartree", "projected"), default="auto")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        command=args.command,
        input=args.input,
        tree=getattr(args, "tree", None),
        tol=args.tol,
        ranks=parse_ranks(args.ranks),
        dt=getattr(args, "dt", None),
        t_end=getattr(args, "t_end", None),
        scheme=getattr(args, "scheme", "rk4"),
        seed=args.seed,
        output=args.output,
        operator=getattr(args, "operator", None),
        method=getattr(args, "method", "auto"),
        direction=getattr(args, "direction", None),
        random=getattr(args, "random", False),
    )


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        return COMMANDS[cfg.command](cfg, out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except formats.FormatError as exc:
        print(f"error: malformed file: {exc}", file=sys.stderr)
        return EXIT_IO
    except (RankDegeneracy, IllConditionedError, NotInNeighborhood, RankDeficiencyError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InadmissibleRankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (UsageError, TreeParseError, InvalidTreeError, RankMismatchError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
