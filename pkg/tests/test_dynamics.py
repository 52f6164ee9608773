import numpy as np
import pytest
from scipy.linalg import expm

from helpers import rel
from tbtensor.dense import elementary
from tbtensor.dynamics import (HartreeState, RankDegeneracy, SumOfProductsOperator, apply_operator, hartree_rhs,
                               hartree_to_tbf, integrate_hartree, integrate_tangent_projected, mean_field,
                               tbf_to_hartree)
from tbtensor.geometry import project_tangent
from tbtensor.tbf import TBFTensor, evaluate, truncate_dense
from tbtensor.tree import standard_tree


def sym(rng, n):
    a = rng.standard_normal((n, n))
    return (a + a.T) / 2


def unit_vectors(rng, dims):
    return [v / np.linalg.norm(v) for v in (rng.standard_normal(n) for n in dims)]


def random_sop(rng, dims, terms=2):
    return SumOfProductsOperator([(rng.standard_normal(), [sym(rng, n) for n in dims]) for _ in range(terms)])


def test_operator_validation():
    with pytest.raises(ValueError):
        SumOfProductsOperator([(1.0, [np.eye(2), np.eye(3)]), (1.0, [np.eye(2), np.eye(2)])])
    with pytest.raises(ValueError):
        SumOfProductsOperator([(1.0, [np.ones((2, 3))])])
    op = SumOfProductsOperator([(1.0, [np.eye(2), np.eye(3)])])
    with pytest.raises(ValueError):
        apply_operator(op, np.zeros((3, 2)))


def test_apply_identity_and_elementary():
    rng = np.random.default_rng(0)
    v = rng.standard_normal((2, 3, 2))
    ident = SumOfProductsOperator([(1.0, [np.eye(n) for n in v.shape])])
    assert np.allclose(apply_operator(ident, v), v)
    mats = [rng.standard_normal((n, n)) for n in (2, 3, 2)]
    vecs = [rng.standard_normal(n) for n in (2, 3, 2)]
    op = SumOfProductsOperator([(1.0, mats)])
    assert np.allclose(apply_operator(op, elementary(vecs)), elementary([a @ x for a, x in zip(mats, vecs)]))


def test_apply_matches_kronecker():
    rng = np.random.default_rng(1)
    op = random_sop(rng, (2, 2, 2), terms=3)
    v = rng.standard_normal((2, 2, 2))
    assert np.allclose(apply_operator(op, v).ravel(), op.dense_matrix() @ v.ravel())


def test_mean_field_single_site():
    rng = np.random.default_rng(2)
    mats = [sym(rng, n) for n in (3, 4, 2)]
    op = SumOfProductsOperator.single_site(mats)
    state = HartreeState(1.0, unit_vectors(rng, (3, 4, 2)))
    for j in range(3):
        others = sum(state.factors[k] @ mats[k] @ state.factors[k] for k in range(3) if k != j)
        assert np.allclose(mean_field(op, state, j), mats[j] + others * np.eye(mats[j].shape[0]))


def test_mean_field_two_modes():
    rng = np.random.default_rng(3)
    a1, a2 = sym(rng, 3), sym(rng, 2)
    state = HartreeState(1.0, unit_vectors(rng, (3, 2)))
    op = SumOfProductsOperator([(1.0, [a1, a2])])
    v2 = state.factors[1]
    assert np.allclose(mean_field(op, state, 0), (v2 @ a2 @ v2) * a1)


def test_mean_field_bilinear_form():
    rng = np.random.default_rng(4)
    dims = (3, 2, 4)
    op = random_sop(rng, dims, terms=3)
    state = HartreeState(1.0, unit_vectors(rng, dims))
    for j in range(3):
        z, y = rng.standard_normal(dims[j]), rng.standard_normal(dims[j])
        zs = list(state.factors)
        ys = list(state.factors)
        zs[j], ys[j] = z, y
        full = np.sum(apply_operator(op, elementary(zs)) * elementary(ys))
        assert y @ mean_field(op, state, j) @ z == pytest.approx(full, rel=1e-12)


def test_rhs_eigenvectors_are_stationary():
    rng = np.random.default_rng(5)
    dims = (3, 3)
    qs = [np.linalg.qr(rng.standard_normal((n, n)))[0] for n in dims]
    terms = []
    for w in (0.7, -1.2):
        terms.append((w, [q @ np.diag(rng.standard_normal(q.shape[0])) @ q.T for q in qs]))
    op = SumOfProductsOperator(terms)
    state = HartreeState(2.0, [q[:, 0] for q in qs])
    lam_dot, vdots = hartree_rhs(op, state)
    mu = sum(w * np.prod([v @ a @ v for a, v in zip(mats, state.factors)]) for w, mats in terms)
    assert all(np.linalg.norm(vd) < 1e-12 for vd in vdots)
    assert lam_dot == pytest.approx(mu * 2.0, rel=1e-12)


def test_rhs_variational_condition():
    rng = np.random.default_rng(6)
    dims = (3, 4, 2)
    op = random_sop(rng, dims)
    state = HartreeState(1.5, unit_vectors(rng, dims))
    _, vdots = hartree_rhs(op, state)
    for j, (v, vd) in enumerate(zip(state.factors, vdots)):
        assert abs(v @ vd) < 1e-14
        w = rng.standard_normal(dims[j])
        w -= (w @ v) * v
        assert vd @ w == pytest.approx(w @ mean_field(op, state, j) @ v, rel=1e-12)


def test_zero_operator_is_stationary():
    rng = np.random.default_rng(7)
    dims = (3, 2, 2)
    op = SumOfProductsOperator([(0.0, [np.eye(n) for n in dims])])
    s0 = HartreeState(1.3, unit_vectors(rng, dims))
    traj = integrate_hartree(op, s0, 0.1, 0.01)
    for s in traj.states:
        assert s.lam == pytest.approx(1.3, rel=1e-15)
        assert all(np.allclose(a, b) for a, b in zip(s.factors, s0.factors))


def test_hartree_separable_exact():
    rng = np.random.default_rng(8)
    dims = (4, 3, 4)
    op = SumOfProductsOperator.single_site([sym(rng, n) for n in dims])
    s0 = HartreeState(1.0, unit_vectors(rng, dims))
    traj = integrate_hartree(op, s0, 0.5, 1e-3)
    exact = (expm(0.5 * op.dense_matrix()) @ s0.dense().ravel()).reshape(dims)
    assert rel(traj.final.dense(), exact) < 1e-8


def test_skew_generators_preserve_norms():
    rng = np.random.default_rng(9)
    dims = (3, 3, 3)
    skew = []
    for n in dims:
        a = rng.standard_normal((n, n))
        skew.append(a - a.T)
    op = SumOfProductsOperator.single_site(skew)
    s0 = HartreeState(1.0, unit_vectors(rng, dims))
    traj = integrate_hartree(op, s0, 1.0, 1e-3)
    for s in traj.states:
        assert all(abs(np.linalg.norm(v) - 1) <= 1e-9 for v in s.factors)
    assert traj.final.lam == pytest.approx(1.0, rel=1e-9)


def test_energy_derivative_matches_chain_rule():
    rng = np.random.default_rng(10)
    dims = (3, 3, 2)
    a = [sym(rng, n) for n in dims]
    op = SumOfProductsOperator([(1.0, a)])
    s0 = HartreeState(1.0, unit_vectors(rng, dims))

    def energy(s):
        return np.prod([v @ m @ v for v, m in zip(s.factors, a)])

    _, vdots = hartree_rhs(op, s0)
    e = [v @ m @ v for v, m in zip(s0.factors, a)]
    analytic = sum(2 * (vd @ a[j] @ s0.factors[j]) * np.prod([e[k] for k in range(3) if k != j])
                   for j, vd in enumerate(vdots))
    errs = []
    for dt in (1e-2, 1e-3):
        e1 = energy(integrate_hartree(op, s0, dt, dt).final)
        e2 = energy(integrate_hartree(op, s0, 2 * dt, dt).final)
        # one-sided second-order difference
        errs.append(abs((-3 * energy(s0) + 4 * e1 - e2) / (2 * dt) - analytic))
    assert np.log10(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.2)


def test_lambda_closed_form_euler_and_rk4():
    rng = np.random.default_rng(11)
    dims = (3, 3)
    qs = [np.linalg.qr(rng.standard_normal((n, n)))[0] for n in dims]
    mats = [q @ np.diag(rng.standard_normal(3)) @ q.T for q in qs]
    op = SumOfProductsOperator([(0.8, mats)])
    s0 = HartreeState(1.7, [q[:, 1] for q in qs])
    mu = 0.8 * np.prod([q[:, 1] @ m @ q[:, 1] for q, m in zip(qs, mats)])
    rk4 = integrate_hartree(op, s0, 1.0, 1e-3, "rk4").final.lam
    euler = integrate_hartree(op, s0, 1.0, 1e-3, "euler").final.lam
    assert rk4 == pytest.approx(1.7 * np.exp(mu), rel=1e-8)
    assert euler == pytest.approx(1.7 * np.exp(mu), rel=1e-2)


def test_bad_step_arguments():
    op = SumOfProductsOperator([(1.0, [np.eye(2), np.eye(2)])])
    s0 = HartreeState(1.0, [np.array([1.0, 0.0])] * 2)
    with pytest.raises(ValueError):
        integrate_hartree(op, s0, 1.0, 0.0)
    with pytest.raises(ValueError):
        integrate_hartree(op, s0, 1.0, 0.3)
    with pytest.raises(ValueError):
        integrate_hartree(op, s0, 1.0, 0.1, "leapfrog")


def test_hartree_rhs_equals_tangent_projection():
    rng = np.random.default_rng(12)
    dims = (3, 2, 4)
    op = random_sop(rng, dims, terms=3)
    state = HartreeState(0.9, unit_vectors(rng, dims))
    lam_dot, vdots = hartree_rhs(op, state)
    dense_rhs = lam_dot * elementary(state.factors)
    for j, vd in enumerate(vdots):
        fs = list(state.factors)
        fs[j] = vd
        dense_rhs = dense_rhs + state.lam * elementary(fs)
    x = hartree_to_tbf(state, standard_tree("tucker", 3))
    proj, _ = project_tangent(x, apply_operator(op, state.dense()))
    assert np.allclose(proj, dense_rhs, atol=1e-10)


def test_tbf_hartree_conversion():
    rng = np.random.default_rng(13)
    state = HartreeState(-2.0, unit_vectors(rng, (3, 2, 2)))
    back = tbf_to_hartree(hartree_to_tbf(state, standard_tree("tt", 3)))
    assert np.allclose(back.dense(), state.dense())


def test_projected_zero_field_is_constant():
    rng = np.random.default_rng(14)
    t = standard_tree("balanced", 4)
    x, _ = truncate_dense(rng.standard_normal((3, 3, 3, 3)), t, {n: (1 if n == t.root else 2) for n in t.nodes()})
    traj = integrate_tangent_projected(lambda time, u: np.zeros_like(u), x, 0.05, 0.01)
    for s in traj.states:
        assert np.allclose(evaluate(s), evaluate(x), atol=1e-13)


@pytest.mark.parametrize("kind", ["tucker", "tt", "balanced"])
def test_projected_matches_hartree(kind):
    rng = np.random.default_rng(15)
    dims = (3, 3, 2)
    op = random_sop(rng, dims)
    s0 = HartreeState(1.1, unit_vectors(rng, dims))
    th = integrate_hartree(op, s0, 0.2, 1e-2)
    tp = integrate_tangent_projected(op, hartree_to_tbf(s0, standard_tree(kind, 3)), 0.2, 1e-2)
    for a, b in zip(th.states, tp.states):
        assert np.linalg.norm(a.dense() - evaluate(b)) < 1e-8
    assert max(tp.residuals) < 1e-9


def test_projected_rank_two_residual_and_field_hook():
    rng = np.random.default_rng(16)
    t = standard_tree("tt", 3)
    x, _ = truncate_dense(rng.standard_normal((3, 3, 3)), t, {n: (1 if n == t.root else 2) for n in t.nodes()})
    op = random_sop(rng, (3, 3, 3))
    a = integrate_tangent_projected(op, x, 0.05, 1e-2)
    b = integrate_tangent_projected(lambda time, u: apply_operator(op, u), x, 0.05, 1e-2)
    assert max(a.residuals) < 1e-9
    assert all(np.allclose(evaluate(p), evaluate(q), atol=1e-14) for p, q in zip(a.states, b.states))


def test_projected_rejects_degenerate_start():
    t = standard_tree("tucker", 2)
    x = TBFTensor(t, {1: np.eye(2), 2: np.eye(2)}, {(1, 2): np.array([[[1.0, 0.0], [0.0, 0.0]]])})
    with pytest.raises(RankDegeneracy):
        integrate_tangent_projected(lambda time, u: u, x, 0.1, 0.1)


def test_projected_detects_rank_collapse():
    # constant velocity drives the second singular value to zero at t = 0.05
    t = standard_tree("tucker", 2)
    x = TBFTensor(t, {1: np.eye(2), 2: np.eye(2)}, {(1, 2): np.diag([1.0, 0.05])[None]}, orthonormal=True)

    def field(time, u):
        return -np.diag([0.0, 1.0])

    with pytest.raises(RankDegeneracy):
        integrate_tangent_projected(field, x, 0.2, 0.01, "euler")
