import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from helpers import MIXED6
from tbtensor import formats
from tbtensor.dynamics import SumOfProductsOperator
from tbtensor.tbf import evaluate, from_dense
from tbtensor.tree import standard_tree

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.lists(st.integers(1, 3), min_size=1, max_size=4).map(tuple), elements=finite))
def test_dense_roundtrip_is_exact(v):
    back = formats.loads_dense(formats.dumps_dense(v))
    assert back.shape == v.shape
    assert np.array_equal(back, v)


def test_dense_header_and_order():
    text = formats.dumps_dense(np.arange(6.0).reshape(2, 3))
    assert text == "DENSE 2 2 3\n0 1 2 3 4 5\n"


@pytest.mark.parametrize("text", [
    "DENSE 2 2 2\n1 2 3\n",
    "DENSE 2 2 2\n1 2 3 4 5\n",
    "DENS 1 1\n0\n",
    "DENSE 1 2\n1 nan\n",
    "DENSE 1 2\n1 x\n",
])
def test_dense_malformed(text):
    with pytest.raises(formats.FormatError):
        formats.loads_dense(text)


@pytest.mark.parametrize("tree", [standard_tree("tt", 3), standard_tree("balanced", 4), MIXED6])
def test_tbf_roundtrip(tree):
    rng = np.random.default_rng(0)
    dims = tuple(rng.integers(2, 4, size=tree.d))
    x = from_dense(rng.standard_normal(dims), tree)
    text = formats.dumps_tbf(x)
    y = formats.loads_tbf(text)
    assert y.tree == tree
    assert all(np.array_equal(x.frames[j], y.frames[j]) for j in x.frames)
    assert all(np.array_equal(x.transfer[n], y.transfer[n]) for n in x.transfer)
    assert formats.dumps_tbf(y) == text
    assert np.array_equal(evaluate(x), evaluate(y))


def test_tbf_layout():
    x = from_dense(np.eye(2), standard_tree("tucker", 2))
    lines = formats.dumps_tbf(x).splitlines()
    assert lines[:4] == ["TBF", "NODE 1,2 CHILDREN 2", "  NODE 1 CHILDREN 0", "  NODE 2 CHILDREN 0"]
    assert lines[4] == "FRAME 1 2 2"
    assert lines[8] == "TRANSFER 1,2 1 2 2"


def test_tbf_errors():
    good = formats.dumps_tbf(from_dense(np.eye(2), standard_tree("tucker", 2)))
    with pytest.raises(formats.FormatError):
        formats.loads_tbf(good.replace("TRANSFER 1,2 1 2 2", "TRANSFER 1,2 1 2 3"))
    with pytest.raises(formats.FormatError):
        formats.loads_tbf(good.replace("FRAME 1", "FRAME 7"))
    with pytest.raises(formats.FormatError):
        formats.loads_tbf(good.replace("TBF", "TBX"))
    with pytest.raises(formats.FormatError):
        formats.loads_tbf(good.replace("NODE 2 CHILDREN 0", "NODE 3 CHILDREN 0"))


def test_sop_roundtrip():
    rng = np.random.default_rng(1)
    op = SumOfProductsOperator([(rng.standard_normal(), [rng.standard_normal((n, n)) for n in (2, 3)])
                                for _ in range(3)])
    text = formats.dumps_sop(op)
    assert text.startswith("SOP 2 3\n")
    back = formats.loads_sop(text)
    for (w1, m1), (w2, m2) in zip(op.terms, back.terms):
        assert w1 == w2 and all(np.array_equal(a, b) for a, b in zip(m1, m2))


def test_sop_errors():
    with pytest.raises(formats.FormatError):
        formats.loads_sop("SOP 2 1\n1.0\nMAT 2\n1 0 0 1\nMAT 3\n" + " ".join(["0"] * 9) + "\n1\n")
    with pytest.raises(formats.FormatError):
        formats.loads_sop("SOP 1 1\n1.0\nMAT 2\n1 0 0\n")


def test_trajectory_lines():
    text = formats.dumps_trajectory([(0.0, 1.5, 1.0, 0.0), (0.1, 1.25, 1.0, 1e-17)])
    assert text == "0 1.5 1 0\n0.10000000000000001 1.25 1 1.0000000000000001e-17\n"
