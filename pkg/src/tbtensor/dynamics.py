"""Dirac-Frenkel reduced dynamics.

Two integrators: the time-dependent Hartree method on rank-one tensors
``lambda * v_1 (x) ... (x) v_d`` with unit factors, and a general
tangent-projected integrator for tensors of fixed TB rank that steps in
local chart coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dense import elementary
from .geometry import (ChartParams, _solve_tangent, _orthonormal_tangent_frame, base_params, chart_decode,
                       complements, transfer_conditioning)
from .tbf import TBFTensor, evaluate, orthonormalize

RANK_DEGENERACY_THRESHOLD = 1e-8


class RankDegeneracy(ArithmeticError):
    """The trajectory approached the boundary of the fixed-rank manifold."""


@dataclass
class SumOfProductsOperator:
    """``sum_t w_t A_1^(t) (x) ... (x) A_d^(t)`` acting on order-d tensors."""

    terms: list  # list of (weight, [A_1, ..., A_d])

    def __post_init__(self):
        self.terms = [(float(w), [np.asarray(a, dtype=float) for a in mats]) for w, mats in self.terms]
        if self.terms:
            d = len(self.terms[0][1])
            for w, mats in self.terms:
                if len(mats) != d:
                    raise ValueError("all terms need the same number of factors")
                for a in mats:
                    if a.ndim != 2 or a.shape[0] != a.shape[1]:
                        raise ValueError("factors must be square matrices")
                if [a.shape[0] for a in mats] != self.dims:
                    raise ValueError("factor sizes differ between terms")

    @property
    def d(self) -> int:
        return len(self.terms[0][1]) if self.terms else 0

    @property
    def dims(self) -> list[int]:
        return [a.shape[0] for a in self.terms[0][1]] if self.terms else []

    @classmethod
    def single_site(cls, mats: Sequence, weight: float = 1.0) -> "SumOfProductsOperator":
        """Separable operator ``sum_j I (x) ... (x) A_j (x) ... (x) I``."""
        dims = [np.asarray(a).shape[0] for a in mats]
        terms = []
        for j, a in enumerate(mats):
            factors = [np.eye(n) for n in dims]
            factors[j] = np.asarray(a, dtype=float)
            terms.append((weight, factors))
        return cls(terms)

    def dense_matrix(self) -> np.ndarray:
        """Kronecker assembly (row-major mode order); desk-scale only."""
        n = math.prod(self.dims)
        out = np.zeros((n, n))
        for w, mats in self.terms:
            k = mats[0]
            for a in mats[1:]:
                k = np.kron(k, a)
            out += w * k
        return out


def apply_operator(op: SumOfProductsOperator, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if list(v.shape) != op.dims:
        raise ValueError(f"tensor shape {v.shape} does not match operator dims {op.dims}")
    out = np.zeros_like(v)
    for w, mats in op.terms:
        y = v
        for j, a in enumerate(mats):
            y = np.moveaxis(np.tensordot(a, y, axes=([1], [j])), 0, j)
        out += w * y
    return out


@dataclass
class HartreeState:
    lam: float
    factors: list  # unit vectors v_j
    t: float = 0.0

    def dense(self) -> np.ndarray:
        return self.lam * elementary(self.factors)


def _expectations(op: SumOfProductsOperator, factors) -> list[list[float]]:
    return [[float(v @ a @ v) for a, v in zip(mats, factors)] for _, mats in op.terms]


def mean_field(op: SumOfProductsOperator, state: HartreeState, j: int) -> np.ndarray:
    """Single-mode matrix whose quadratic form is the bilinear form a_j.

    ``j`` is 0-based.
    """
    exps = _expectations(op, state.factors)
    n = op.dims[j]
    out = np.zeros((n, n))
    for (w, mats), e in zip(op.terms, exps):
        out += w * math.prod(e[k] for k in range(op.d) if k != j) * mats[j]
    return out


def hartree_rhs(op: SumOfProductsOperator, state: HartreeState):
    """Return ``(lambda_dot, [v_dot_j])`` with each ``v_dot_j`` orthogonal to ``v_j``."""
    exps = _expectations(op, state.factors)
    energy = sum(w * math.prod(e) for (w, _), e in zip(op.terms, exps))
    vdots = []
    for j, v in enumerate(state.factors):
        g = mean_field(op, state, j) @ v
        vdots.append(g - (v @ g) * v)
    return energy * state.lam, vdots


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    residuals: list = field(default_factory=list)

    def append(self, t, state, residual):
        self.times.append(t)
        self.states.append(state)
        self.residuals.append(residual)

    @property
    def final(self):
        return self.states[-1]


def _step_count(t_end: float, dt: float) -> int:
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = int(round(t_end / dt))
    if n < 0 or not math.isclose(n * dt, t_end, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError("t_end must be a non-negative multiple of dt")
    return n


def _gauge_residual(state: HartreeState, vdots) -> float:
    return max((abs(float(v @ vd)) for v, vd in zip(state.factors, vdots)), default=0.0)


def integrate_hartree(op: SumOfProductsOperator, state0: HartreeState, t_end: float, dt: float,
                      scheme: str = "rk4") -> Trajectory:
    """Explicit time stepping of the Hartree equations.

    Factors are renormalized after every step and the norm is moved into
    ``lam``. The recorded residual is the largest ``|<v_dot_j, v_j>|`` at the
    start of each step (the gauge condition).
    """
    n = _step_count(t_end, dt)
    if scheme not in ("rk4", "euler"):
        raise ValueError(f"unknown scheme {scheme!r}")
    factors = [np.asarray(v, dtype=float) for v in state0.factors]
    norms = [np.linalg.norm(v) for v in factors]
    state = HartreeState(float(state0.lam) * math.prod(norms), [v / s for v, s in zip(factors, norms)], state0.t)
    traj = Trajectory()

    def shifted(s: HartreeState, k, h):
        return HartreeState(s.lam + h * k[0], [v + h * vd for v, vd in zip(s.factors, k[1])], s.t + h)

    for i in range(n + 1):
        k1 = hartree_rhs(op, state)
        traj.append(state.t, state, _gauge_residual(state, k1[1]))
        if i == n:
            break
        if scheme == "euler":
            new = shifted(state, k1, dt)
        else:
            k2 = hartree_rhs(op, shifted(state, k1, dt / 2))
            k3 = hartree_rhs(op, shifted(state, k2, dt / 2))
            k4 = hartree_rhs(op, shifted(state, k3, dt))
            lam = state.lam + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            vs = [v + dt / 6 * (a + 2 * b + 2 * c + e)
                  for v, a, b, c, e in zip(state.factors, k1[1], k2[1], k3[1], k4[1])]
            new = HartreeState(lam, vs, state.t + dt)
        norms = [np.linalg.norm(v) for v in new.factors]
        state = HartreeState(new.lam * math.prod(norms), [v / s for v, s in zip(new.factors, norms)],
                             state0.t + (i + 1) * dt)
    return traj


def _field(F) -> Callable:
    if isinstance(F, SumOfProductsOperator):
        return lambda t, u: apply_operator(F, u)
    if callable(F):
        return F
    raise TypeError("F must be a SumOfProductsOperator or a callable F(t, u)")


def integrate_tangent_projected(F, x0: TBFTensor, t_end: float, dt: float, scheme: str = "rk4") -> Trajectory:
    """Dirac-Frenkel integration on the manifold of fixed TB rank.

    Each step works in the chart at the current point: the velocity in chart
    coordinates solves the least-squares problem ``J(p) p_dot ~ F`` (the
    metric projection of the field onto the tangent space at the decoded
    point), the chart coordinates are advanced explicitly, and the result
    is decoded and re-orthonormalized. The recorded residual is
    ``max_z |<x_dot - F, z>|`` over an orthonormal tangent basis at the start
    of the step.
    """
    n = _step_count(t_end, dt)
    if scheme not in ("rk4", "euler"):
        raise ValueError(f"unknown scheme {scheme!r}")
    f = _field(F)
    x = x0 if x0.orthonormal else orthonormalize(x0)
    if transfer_conditioning(x) < RANK_DEGENERACY_THRESHOLD:
        raise RankDegeneracy("initial tensor is not of full TB rank")
    traj = Trajectory()
    t = 0.0
    for i in range(n + 1):
        comp = complements(x)
        p0 = base_params(x)

        def velocity(p: ChartParams, tt: float):
            xp = chart_decode(x, p)
            target = f(tt, evaluate(xp))
            j, layout, coef = _solve_tangent(xp, comp, np.asarray(target, dtype=float))
            return layout.to_params(coef, p0), j @ coef, target

        k1, xdot, target = velocity(p0, t)
        q = _orthonormal_tangent_frame(x)
        residual = float(np.max(np.abs(q.T @ (xdot - np.ravel(target))))) if q.size else 0.0
        traj.append(t, x, residual)
        if i == n:
            break
        if scheme == "euler":
            p1 = p0 + k1.scaled(dt)
        else:
            k2, *_ = velocity(p0 + k1.scaled(dt / 2), t + dt / 2)
            k3, *_ = velocity(p0 + k2.scaled(dt / 2), t + dt / 2)
            k4, *_ = velocity(p0 + k3.scaled(dt), t + dt)
            incr = k1 + k2.scaled(2.0) + k3.scaled(2.0) + k4
            p1 = p0 + incr.scaled(dt / 6)
        x = orthonormalize(chart_decode(x, p1))
        if x.is_zero_representation or transfer_conditioning(x) < RANK_DEGENERACY_THRESHOLD:
            raise RankDegeneracy(f"TB rank degenerated at t = {t + dt:.6g}")
        t = (i + 1) * dt
    return traj


def hartree_to_tbf(state: HartreeState, tree) -> TBFTensor:
    """Rank-one Tucker representation of a Hartree state."""
    frames = {j + 1: np.asarray(v, dtype=float)[:, None] for j, v in enumerate(state.factors)}
    transfer = {node: np.ones((1,) * (len(tree.sons(node)) + 1)) for node in tree.internal_nodes()}
    transfer[tree.root] = transfer[tree.root] * state.lam
    return TBFTensor(tree, frames, transfer, orthonormal=True)


def tbf_to_hartree(x: TBFTensor, t: float = 0.0) -> HartreeState:
    """Read back a rank-one tensor as ``lam * v_1 (x) ... (x) v_d`` with unit, sign-fixed factors."""
    if any(r != 1 for r in x.ranks().values()):
        raise ValueError("tensor is not rank one")
    v = evaluate(x)
    factors = []
    for j in range(1, x.tree.d + 1):
        f = x.frames[j][:, 0]
        nrm = np.linalg.norm(f)
        f = f / nrm
        k = int(np.argmax(np.abs(f)))
        if f[k] < 0:
            f = -f
        factors.append(f)
    lam = float(np.tensordot(v, elementary(factors), axes=v.ndim))
    return HartreeState(lam, factors, t)
