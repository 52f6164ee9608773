import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from helpers import delta2, max_angle
from tbtensor.dense import (column_space, contract_functional, elementary, frobenius_norm, injective_norm, inner,
                            matricize, minimal_subspace, unmatricize)


def test_matricize_delta():
    v = np.zeros((2, 2, 2))
    v[0, 0, 0] = 1.0
    m = matricize(v, (1,))
    assert m.shape == (2, 4)
    assert m[0, 0] == 1.0 and m.sum() == 1.0


def test_matricize_full_block_is_vectorization():
    v = np.arange(24.0).reshape(2, 3, 4)
    assert np.array_equal(matricize(v, (1, 2, 3))[:, 0], v.ravel())


def test_matricize_enumeration_oracle():
    rng = np.random.default_rng(3)
    v = rng.standard_normal((2, 3, 2))
    m = matricize(v, (1, 3))
    for i, j, k in np.ndindex(*v.shape):
        assert m[i * 2 + k, j] == v[i, j, k]
    assert np.array_equal(unmatricize(m, (1, 3), v.shape), v)


def test_matricize_subset_check():
    with pytest.raises(ValueError):
        matricize(np.zeros((2, 2)), (3,))


def test_matricize_within_alpha():
    rng = np.random.default_rng(4)
    w = rng.standard_normal((3, 4))  # modes {2, 5}
    m = matricize(w, (5,), alpha=(2, 5))
    assert np.array_equal(m, w.T)


def test_contract_elementary():
    rng = np.random.default_rng(5)
    a, b, c = rng.standard_normal((3, 4))
    out = contract_functional(np.outer(a, b), (1,), c)
    assert np.allclose(out, (b @ c) * a)
    assert not np.any(contract_functional(np.outer(a, b), (1,), np.zeros(4)))


def test_contract_matches_matricization():
    rng = np.random.default_rng(6)
    v = rng.standard_normal((2, 3, 4))
    phi = rng.standard_normal((2, 4))
    out = contract_functional(v, (2,), phi)
    assert np.allclose(out, matricize(v, (2,)) @ phi.ravel())
    with pytest.raises(ValueError):
        contract_functional(v, (2,), np.zeros((4, 2)))


def test_inner_product_of_elementary():
    rng = np.random.default_rng(7)
    a, c = rng.standard_normal((2, 3))
    b, d = rng.standard_normal((2, 5))
    brute = sum(a[i] * b[j] * c[i] * d[j] for i in range(3) for j in range(5))
    assert inner(np.outer(a, b), np.outer(c, d)) == pytest.approx(brute, rel=1e-12)
    assert inner(np.outer(a, b), np.outer(c, d)) == pytest.approx((a @ c) * (b @ d), rel=1e-12)
    assert frobenius_norm(np.zeros((2, 2))) == 0.0
    with pytest.raises(ValueError):
        inner(np.zeros(2), np.zeros(3))


def test_column_space_cases():
    assert column_space(np.eye(3)).rank == 3
    u = np.array([1.0, 2.0, 2.0])
    f = column_space(np.outer(u, [1.0, -1.0]))
    assert f.rank == 1
    assert np.allclose(f.basis[:, 0], u / 3)
    assert column_space(np.zeros((3, 2))).rank == 0


def test_column_space_low_rank_product():
    rng = np.random.default_rng(8)
    a = rng.standard_normal((4, 2))
    f = column_space(a @ rng.standard_normal((2, 6)))
    assert f.rank == 2
    assert f.orthonormality_defect() < 1e-12
    assert max_angle(f.basis, a) < 1e-10


def test_minimal_subspace_examples():
    v = delta2(3)
    f = minimal_subspace(v, (2, 3))
    e11 = np.array([1.0, 0, 0, 0])
    e22 = np.array([0, 0, 0, 1.0])
    assert f.rank == 2
    assert max_angle(f.basis, np.stack([e11, e22], axis=1)) < 1e-12
    assert minimal_subspace(np.zeros((2, 2, 2)), (1,)).rank == 0
    rng = np.random.default_rng(9)
    vecs = rng.standard_normal((3, 3))
    g = minimal_subspace(elementary(vecs), (1, 3))
    assert g.rank == 1 and max_angle(g.basis, np.kron(vecs[0], vecs[2])[:, None]) < 1e-12
    with pytest.raises(ValueError):
        minimal_subspace(v, (1,), partition=[(1, 2), (3,)])


def test_injective_norm_matrix():
    assert injective_norm(np.diag([3.0, 1.0])) == (3.0, False)


def test_injective_norm_crossnorm():
    rng = np.random.default_rng(10)
    vecs = [rng.standard_normal(n) for n in (2, 3, 4)]
    est = injective_norm(elementary(vecs))
    assert est.lower_bound
    assert est.value == pytest.approx(np.prod([np.linalg.norm(x) for x in vecs]), rel=1e-12)


def test_injective_norm_grid_oracle():
    # at 2x2x2 parametrize two unit vectors by angles; the best third vector is exact
    rng = np.random.default_rng(11)
    v = rng.standard_normal((2, 2, 2))
    th = np.linspace(0, np.pi, 721)
    x = np.stack([np.cos(th), np.sin(th)], axis=1)
    w = np.einsum("ijk,ai,bj->abk", v, x, x)
    grid = np.max(np.linalg.norm(w, axis=-1))
    est = injective_norm(v).value
    assert est >= grid - 1e-12
    assert est <= grid + 1e-4
    assert est <= frobenius_norm(v) + 1e-12


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3)),
              elements=st.floats(-10, 10)),
       st.sampled_from([(1,), (2,), (3,), (1, 2), (1, 3), (2, 3), (1, 2, 3)]))
def test_matricize_roundtrip_property(v, beta):
    m = matricize(v, beta)
    assert m.size == v.size
    assert np.array_equal(unmatricize(m, beta, v.shape), v)
    assert frobenius_norm(m) == pytest.approx(frobenius_norm(v))
