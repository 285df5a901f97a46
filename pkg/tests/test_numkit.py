import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose, assert_array_equal

from ldseq import numkit
from ldseq.errors import ArgumentError, ShapeError

finite = st.floats(-50, 50, allow_nan=False)
vectors = arrays(np.float64, st.integers(1, 20), elements=finite)


def test_matmul_identity_left():
    m = np.arange(12.0).reshape(3, 4)
    assert_array_equal(numkit.matmul(np.eye(3), m), m)


def test_matmul_hand_example():
    assert_array_equal(numkit.matmul([[1, 2], [3, 4]], [[1], [1]]), [[3], [7]])


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        numkit.matmul(np.ones((2, 3)), np.ones((2, 2)))


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=finite))
def test_matmul_identity_both_sides(a):
    assert_array_equal(numkit.matmul(a, np.eye(a.shape[1])), a)
    assert_array_equal(numkit.matmul(np.eye(a.shape[0]), a), a)


def test_softmax_examples():
    assert_array_equal(numkit.softmax([0.0, 0.0]), [0.5, 0.5])
    assert_allclose(numkit.softmax([1.0, 2.0, 3.0]), [0.09003, 0.24473, 0.66524], atol=1e-5)
    big = numkit.softmax([1000.0, 1001.0])
    assert np.all(np.isfinite(big))
    assert big.sum() == pytest.approx(1.0, abs=1e-12)


def test_softmax_empty():
    with pytest.raises(ArgumentError):
        numkit.softmax([])


@given(vectors)
def test_softmax_sums_to_one_and_keeps_argmax(v):
    y = numkit.softmax(v)
    assert abs(y.sum() - 1.0) <= 1e-12
    # exp may round two close logits to the same value, so compare maxima
    assert y[np.argmax(v)] == y.max()


def test_activation_examples():
    assert_array_equal(numkit.relu([-1.0, 0.0, 2.0]), [0.0, 0.0, 2.0])
    assert_array_equal(numkit.sigmoid([0.0]), [0.5])
    assert_array_equal(numkit.tanh([0.0]), [0.0])


def test_sigmoid_extremes_are_finite():
    out = numkit.sigmoid(np.array([-1000.0, 1000.0]))
    assert_array_equal(out, [0.0, 1.0])


@pytest.mark.parametrize("name", sorted(numkit.ACTIVATIONS))
@given(v=vectors)
def test_activations_monotone(name, v):
    f = numkit.ACTIVATIONS[name]
    order = np.argsort(v, kind="stable")
    assert np.all(np.diff(f(v[order])) >= 0)


@pytest.mark.parametrize("name", sorted(numkit.ACTIVATIONS))
def test_activation_grad_matches_finite_difference(name):
    x = np.linspace(-3, 3, 13) + 0.05    # avoid the relu kink
    f = numkit.ACTIVATIONS[name]
    eps = 1e-6
    numeric = (f(x + eps) - f(x - eps)) / (2 * eps)
    assert_allclose(numkit.activation_grad(name, f(x)), numeric, atol=1e-7)


def test_xavier_single_entry_bound():
    w = numkit.xavier_init(1, 1, numkit.make_rng(3))
    assert w.shape == (1, 1)
    assert -np.sqrt(3) <= w[0, 0] <= np.sqrt(3)


def test_xavier_deterministic():
    a = numkit.xavier_init(4, 7, numkit.make_rng(5))
    b = numkit.xavier_init(4, 7, numkit.make_rng(5))
    assert_array_equal(a, b)


def test_xavier_spread():
    w = numkit.xavier_init(200, 200, numkit.make_rng(0))
    expected = np.sqrt(6 / 400) / np.sqrt(3)
    assert abs(w.std() - expected) <= 0.2 * expected
    assert np.abs(w).max() <= np.sqrt(6 / 400)


def test_xavier_rejects_empty():
    with pytest.raises(ArgumentError):
        numkit.xavier_init(0, 3, numkit.make_rng(0))


def test_dropout_mask_cases():
    assert_array_equal(numkit.dropout_mask(5, 0.0, numkit.make_rng(0)), np.ones(5))
    m = numkit.dropout_mask(100_000, 0.5, numkit.make_rng(0))
    assert abs(m.mean() - 1.0) <= 0.02
    assert set(np.unique(m)) <= {0.0, 2.0}
    assert_array_equal(numkit.dropout_mask(50, 0.3, numkit.make_rng(9)),
                       numkit.dropout_mask(50, 0.3, numkit.make_rng(9)))
    with pytest.raises(ArgumentError):
        numkit.dropout_mask(3, 1.0, numkit.make_rng(0))


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_replay_is_bit_identical(seed):
    def run():
        r = numkit.make_rng(seed)
        return numkit.xavier_init(3, 4, r), numkit.dropout_mask(8, 0.2, r), r.permutation(10)
    for x, y in zip(run(), run()):
        assert_array_equal(x, y)


def test_split_rng_children_differ():
    a, b = numkit.split_rng(numkit.make_rng(0), 2)
    assert not np.array_equal(a.random(4), b.random(4))
