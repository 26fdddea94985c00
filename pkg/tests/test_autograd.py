import numpy as np
import pytest

from conftest import random_graph
from ugnn import autograd as ag
from ugnn.autograd import Tensor, UnsupportedPrimitiveError, backward, gradcheck
from ugnn.graph import normalized_adjacency

TOL = 1e-4


def test_sum_gradient_is_ones(rng):
    w = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    backward(ag.tsum(w))
    np.testing.assert_array_equal(w.grad, np.ones((3, 4)))


def test_non_scalar_loss_rejected():
    with pytest.raises(ValueError):
        backward(Tensor(np.ones(3), requires_grad=True) * 2.0)


def test_unsupported_primitive_rejected():
    x = Tensor(np.ones(2), requires_grad=True)
    bad = Tensor(np.ones(2), parents=(x,), op="cosine", backward=lambda g: (g,))
    with pytest.raises(UnsupportedPrimitiveError):
        backward(ag.tsum(bad))


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = x * x
    backward(ag.tsum(y + y))
    np.testing.assert_allclose(x.grad, [8.0])


@pytest.mark.parametrize("seed", range(3))
def test_elementwise_and_dense_primitives(seed):
    rng = np.random.default_rng(seed)
    n, d, k = rng.integers(2, 6, size=3)
    arrays = [rng.normal(size=(n, d)), rng.normal(size=(d, k)), rng.normal(size=(k,)), rng.uniform(0.5, 2, (n, k))]

    def fn(t):
        x, w, b, p = t
        h = x @ w + b
        h = ag.relu(h) + ag.leaky_relu(h, 0.2) * p - ag.sigmoid(-h)
        return ag.tsum(ag.reciprocal(p + 1.0) * h * h)

    assert gradcheck(fn, arrays) < TOL


@pytest.mark.parametrize("seed", range(3))
def test_graph_primitives(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, int(rng.integers(3, 8)), p=0.5)
    a_hat = g.adjacency_self_loop
    a_tilde = normalized_adjacency(g)
    n = g.num_nodes
    arrays = [rng.normal(size=(n, 3)), rng.normal(size=(3, 1))]

    def fn(t):
        x, a = t
        h = ag.spmm(a_tilde, x)
        s = ag.gather_rows(h @ a, a_hat.row_ids) + ag.gather_rows(h @ a, a_hat.col_indices)
        att = ag.segment_softmax(ag.leaky_relu(s, 0.2), a_hat.row_offsets)
        agg = ag.segment_sum(ag.gather_rows(h, a_hat.col_indices) * att, a_hat.row_ids, n)
        return ag.tsum(agg * agg) + ag.tsum(ag.neighborhood_variance(x, g))

    assert gradcheck(fn, arrays) < TOL


def test_mlp_cross_entropy(rng):
    n, d, h, k = 8, 5, 6, 3
    labels = rng.integers(0, k, size=n)
    mask = rng.random(n) < 0.7
    mask[0] = True
    arrays = [rng.normal(size=(d, h)), rng.normal(size=h), rng.normal(size=(h, k)), rng.normal(size=k)]
    x = Tensor(rng.normal(size=(n, d)))

    def fn(t):
        w1, b1, w2, b2 = t
        return ag.softmax_cross_entropy(ag.relu(x @ w1 + b1) @ w2 + b2, labels, mask)

    assert gradcheck(fn, arrays) < TOL


def test_cross_entropy_value_and_empty_mask():
    logits = Tensor(np.zeros((2, 4)))
    np.testing.assert_allclose(ag.softmax_cross_entropy(logits, np.array([0, 3])).value, np.log(4))
    with pytest.raises(ValueError):
        ag.softmax_cross_entropy(logits, np.array([0, 3]), np.zeros(2, dtype=bool))
