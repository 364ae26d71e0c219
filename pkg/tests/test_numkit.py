import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from s2sl.numkit import RngStream, ShapeError, gaussian_sample, matmul, seeded_shuffle


def test_matmul_identity():
    b = [[5.0, 6.0], [7.0, 8.0]]
    np.testing.assert_array_equal(matmul(np.eye(2), b), b)


def test_matmul_hand_computed():
    # 1*5+2*7, 1*6+2*8 / 3*5+4*7, 3*6+4*8
    np.testing.assert_array_equal(
        matmul([[1, 2], [3, 4]], [[5, 6], [7, 8]]), [[19.0, 22.0], [43.0, 50.0]]
    )


def test_matmul_zero():
    b = np.arange(10.0).reshape(2, 5)
    assert np.array_equal(matmul(np.zeros((2, 2)), b), np.zeros((2, 5)))


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"2x3 by 2x2"):
        matmul(np.ones((2, 3)), np.ones((2, 2)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5))
def test_matmul_associative_and_distributive(seed, n, m, p, q):
    r = RngStream(seed)
    a = r.uniform(-1, 1, (n, m))
    b = r.uniform(-1, 1, (m, p))
    b2 = r.uniform(-1, 1, (m, p))
    c = r.uniform(-1, 1, (p, q))
    np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), atol=1e-9, rtol=0)
    np.testing.assert_allclose(matmul(a, b + b2), matmul(a, b) + matmul(a, b2), atol=1e-9, rtol=0)


def test_gaussian_degenerate():
    assert gaussian_sample(RngStream(0), 3.0, 0.0, 4) == [3.0, 3.0, 3.0, 3.0]


def test_gaussian_sample_mean():
    draws = gaussian_sample(RngStream(42), 0.0, 1.0, 10000)
    assert abs(sum(draws) / len(draws)) < 0.05


def test_gaussian_replay_and_negative_stddev():
    assert gaussian_sample(RngStream(9), 1.0, 2.0, 50) == gaussian_sample(RngStream(9), 1.0, 2.0, 50)
    with pytest.raises(ValueError):
        gaussian_sample(RngStream(9), 0.0, -1.0, 3)


def test_shuffle_edge_cases():
    assert seeded_shuffle(RngStream(1), []) == []
    assert seeded_shuffle(RngStream(1), ["a"]) == ["a"]


@given(st.integers(0, 2**64 - 1))
def test_shuffle_preserves_multiset(seed):
    items = list(range(1, 101))
    out = seeded_shuffle(RngStream(seed), items)
    assert sorted(out) == items
    assert out == seeded_shuffle(RngStream(seed), items)


def test_child_streams_are_independent_and_reproducible():
    master = RngStream(7)
    a = master.child(0).uniform(0, 1, 5)
    b = master.child(1).uniform(0, 1, 5)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, RngStream(7).child(0).uniform(0, 1, 5))


def test_seed_range():
    with pytest.raises(ValueError):
        RngStream(-1)
    RngStream(2**64 - 1)
