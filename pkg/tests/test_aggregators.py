import numpy as np
import pytest

from conftest import dense_a_tilde, random_graph
from ugnn.aggregators import (
    APPNP,
    GAT,
    GCN,
    PPNP,
    AdaUGNN,
    aggregate,
    ada_ugnn_aggregate,
    ada_ugnn_propagate,
    appnp_aggregate,
    compute_smoothness_factors,
    gat_aggregate,
    gat_attention,
    gcn_aggregate,
    neighborhood_variance,
    ppnp_aggregate,
    segment_softmax,
)
from ugnn.certify import random_connected_graph
from ugnn.denoising import (
    DenoiseConfig,
    adaptive_gd_step,
    adaptive_step_coefficients,
    closed_form_denoise,
    degree_normalized_adaptive_denoise,
    gd_denoise,
)
from ugnn.graph import build_graph, normalized_adjacency


def test_gcn_isolated_and_edge():
    g = build_graph([(0, 1)], 3)
    x = np.array([[1.0], [0.0], [5.0]])
    np.testing.assert_allclose(gcn_aggregate(x, g), [[0.5], [0.5], [5.0]], atol=1e-15)


def test_gcn_equals_one_step_gd(rng):
    g = random_graph(rng, 9)
    x = rng.normal(size=(9, 3))
    c = 2.0
    step = gd_denoise(x, c, DenoiseConfig(1, stepsize=1 / (2 * c)), g).F
    np.testing.assert_allclose(gcn_aggregate(x, g), step, atol=1e-12)


def test_shape_mismatch(path3):
    with pytest.raises(ValueError):
        gcn_aggregate(np.ones((4, 2)), path3)


def test_gat_uniform_when_vectors_zero(rng):
    g = random_graph(rng, 8)
    x = rng.normal(size=(8, 3))
    att = gat_attention(x, g, np.zeros(3), np.zeros(3)).to_dense()
    for i in range(8):
        nb = g.neighbors(i, self_loop=True)
        np.testing.assert_allclose(att[i, nb], 1 / len(nb), atol=1e-15)
        np.testing.assert_allclose(gat_aggregate(x, g, np.zeros(3), np.zeros(3))[i], x[nb].mean(axis=0), atol=1e-14)


def test_gat_rows_sum_to_one_and_convex(rng):
    for _ in range(10):
        g = random_graph(rng, int(rng.integers(1, 12)))
        x = rng.normal(size=(g.num_nodes, 4))
        a1, a2 = rng.normal(size=4) * 3, rng.normal(size=4) * 3
        att = gat_attention(x, g, a1, a2)
        np.testing.assert_allclose(att.row_sums(), 1.0, atol=1e-12)
        h = gat_aggregate(x, g, a1, a2)
        for i in range(g.num_nodes):
            nb = g.neighbors(i, self_loop=True)
            assert np.all(h[i] >= x[nb].min(axis=0) - 1e-12) and np.all(h[i] <= x[nb].max(axis=0) + 1e-12)


def test_gat_shift_invariance(rng):
    # a constant added to every score of a row leaves attention unchanged; a1 only shifts row i's scores
    g = random_graph(rng, 7)
    x = rng.normal(size=(7, 2))
    a1, a2 = rng.normal(size=2), rng.normal(size=2)
    base = gat_attention(x, g, a1, a2, leaky_slope=1.0).values
    other = gat_attention(x, g, a1 * 0.0, a2, leaky_slope=1.0).values
    np.testing.assert_allclose(base, other, atol=1e-14)


def test_gat_with_forced_scores_matches_adaptive_step(rng):
    # softmax of log(c_i + c_j) within a neighborhood is b_i (c_i + c_j)
    g = random_graph(rng, 8)
    x = rng.normal(size=(8, 3))
    c = rng.uniform(0.1, 2, size=8)
    coef = adaptive_step_coefficients(c, g)
    a_hat = g.adjacency_self_loop
    forced = segment_softmax(np.log(c[a_hat.row_ids] + c[a_hat.col_indices]), a_hat.row_offsets)
    np.testing.assert_allclose(forced, coef.values, atol=1e-14)
    np.testing.assert_allclose(coef.scipy @ x, adaptive_gd_step(x, c, g), atol=1e-14)


def test_gat_vector_length_checked(path3):
    with pytest.raises(ValueError):
        gat_attention(np.ones((3, 2)), path3, np.ones(3), np.ones(2))


def test_ppnp_alpha_one_and_dense_oracle(rng):
    for _ in range(10):
        g = random_graph(rng, int(rng.integers(1, 7)))
        x = rng.normal(size=(g.num_nodes, 2))
        np.testing.assert_array_equal(ppnp_aggregate(x, 1.0, g), x)
        alpha = float(rng.uniform(0.05, 0.95))
        dense = alpha * np.linalg.inv(np.eye(g.num_nodes) - (1 - alpha) * dense_a_tilde(g))
        np.testing.assert_allclose(ppnp_aggregate(x, alpha, g), dense @ x, atol=1e-8)


def test_ppnp_equals_closed_form(rng):
    g = random_graph(rng, 12)
    x = rng.normal(size=(12, 3))
    alpha = 0.15
    np.testing.assert_allclose(ppnp_aggregate(x, alpha, g), closed_form_denoise(x, 1 / alpha - 1, g), atol=1e-8)


@pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5])
def test_alpha_range(alpha, path3):
    with pytest.raises(ValueError):
        PPNP(alpha)
    with pytest.raises(ValueError):
        appnp_aggregate(np.ones((3, 1)), alpha, 2, path3)


def test_appnp_single_step(rng):
    g = random_graph(rng, 6)
    x = rng.normal(size=(6, 2))
    expected = 0.7 * normalized_adjacency(g).to_dense() @ x + 0.3 * x
    np.testing.assert_allclose(appnp_aggregate(x, 0.3, 1, g), expected, atol=1e-15)


def test_appnp_converges_to_ppnp(rng):
    g = random_connected_graph(rng, 8, 12)
    x = rng.normal(size=(g.num_nodes, 2))
    np.testing.assert_allclose(appnp_aggregate(x, 0.1, 1000, g), ppnp_aggregate(x, 0.1, g), atol=1e-6)


def test_linear_aggregators_superpose(rng):
    g = random_graph(rng, 10)
    x, y = rng.normal(size=(10, 2)), rng.normal(size=(10, 2))
    for spec in (GCN(), PPNP(0.2), APPNP(0.2, 5)):
        np.testing.assert_allclose(aggregate(2 * x - 3 * y, spec, g),
                                   2 * aggregate(x, spec, g) - 3 * aggregate(y, spec, g), atol=1e-8)


def test_ppnp_constant_fixed_point_on_regular_graph():
    cycle = build_graph([(i, (i + 1) % 7) for i in range(7)], 7)
    for alpha in (0.1, 0.5, 1.0):
        np.testing.assert_allclose(ppnp_aggregate(np.full((7, 1), 2.5), alpha, cycle), 2.5, atol=1e-9)


def test_neighborhood_variance_matches_loop(rng):
    g = random_graph(rng, 9)
    x = rng.normal(size=(9, 3))
    var = neighborhood_variance(x, g)
    for i in range(9):
        np.testing.assert_allclose(var[i], x[g.neighbors(i, self_loop=True)].var(axis=0), atol=1e-14)


def test_smoothness_factor_edge_cases(rng):
    g = random_graph(rng, 10)
    x = rng.normal(size=(10, 3))
    sf = compute_smoothness_factors(x, g, np.zeros(3), 0.0, s=4.0)
    np.testing.assert_array_equal(sf.C, 2.0)
    same = compute_smoothness_factors(np.ones((10, 3)), g, rng.normal(size=3), 0.8, s=4.0)
    np.testing.assert_allclose(same.C, 4.0 / (1 + np.exp(-0.8)), rtol=1e-14)
    rnd = compute_smoothness_factors(x, g, rng.normal(size=3), -0.2, s=4.0)
    assert np.all((rnd.C > 0) & (rnd.C < 4.0))
    d = g.degrees_self_loop
    for i in range(10):
        nb = g.neighbors(i, self_loop=True)
        np.testing.assert_allclose(rnd.b[i], 1 / (2 + np.sum(rnd.C[i] + rnd.C[nb]) / d[i]), rtol=1e-14)


def test_ada_constant_C_is_appnp(rng):
    for _ in range(100):
        g = random_graph(rng, int(rng.integers(1, 10)))
        x = rng.normal(size=(g.num_nodes, 2))
        c, K = float(rng.uniform(0.1, 20)), int(rng.integers(1, 12))
        np.testing.assert_allclose(ada_ugnn_propagate(x, np.full(g.num_nodes, c), K, g),
                                   appnp_aggregate(x, 1 / (1 + c), K, g), atol=1e-12)


def test_ada_matches_degree_normalized_denoise(rng):
    g = random_graph(rng, 10)
    x = rng.normal(size=(10, 3))
    spec = AdaUGNN(s=5.0, weights=rng.normal(size=3), bias=0.1, K=4)
    C = compute_smoothness_factors(x, g, spec.weights, spec.bias, spec.s).C
    np.testing.assert_allclose(ada_ugnn_aggregate(x, spec, g),
                               degree_normalized_adaptive_denoise(x, C, 4, g).F, atol=1e-12)
    np.testing.assert_allclose(ada_ugnn_propagate(x, C, 1, g), degree_normalized_adaptive_denoise(x, C, 1, g).F,
                               atol=1e-15)


def test_spec_validation():
    with pytest.raises(ValueError):
        APPNP(0.1, 0)
    with pytest.raises(ValueError):
        AdaUGNN(0.0, np.zeros(2), 0.0, 2)
    with pytest.raises(TypeError):
        aggregate(np.ones((3, 1)), "gcn", build_graph([], 3))


def test_column_count_preserved(rng):
    g = random_graph(rng, 6)
    x = rng.normal(size=(6, 5))
    specs = [GCN(), GAT(np.ones(5), np.ones(5)), PPNP(0.3), APPNP(0.3, 3), AdaUGNN(2.0, np.ones(5), 0.0, 3)]
    for spec in specs:
        assert aggregate(x, spec, g).shape == (6, 5)
