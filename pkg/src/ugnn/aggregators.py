"""Feature aggregation operators of GCN, GAT, PPNP, APPNP and ADA-UGNN.

Each operator maps transformed features ``Xp`` (N, d) to aggregated
features of the same shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .denoising import adaptive_propagate, adaptive_propagation
from .graph import Graph, SparseMatrix, normalized_adjacency, spmm
from .linalg import solve_spd


@dataclass(frozen=True)
class GCN:
    pass


@dataclass(frozen=True)
class GAT:
    a1: np.ndarray
    a2: np.ndarray
    leaky_slope: float = 0.2


@dataclass(frozen=True)
class PPNP:
    alpha: float

    def __post_init__(self):
        _check_alpha(self.alpha)


@dataclass(frozen=True)
class APPNP:
    alpha: float
    K: int

    def __post_init__(self):
        _check_alpha(self.alpha)
        _check_steps(self.K)


@dataclass(frozen=True)
class AdaUGNN:
    """``s`` bounds the smoothness factors; ``weights``/``bias`` form the scalar head."""

    s: float
    weights: np.ndarray
    bias: float
    K: int

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("s must be positive")
        _check_steps(self.K)


@dataclass(frozen=True)
class SmoothnessFactors:
    C: np.ndarray
    b: np.ndarray


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


def _check_steps(K: int) -> None:
    if int(K) < 1:
        raise ValueError(f"K must be >= 1, got {K}")


def _check_signal(Xp: np.ndarray, graph: Graph) -> np.ndarray:
    Xp = np.asarray(Xp, dtype=np.float64)
    if Xp.ndim != 2 or Xp.shape[0] != graph.num_nodes:
        raise ValueError(f"expected a ({graph.num_nodes}, d) signal, got {Xp.shape}")
    return Xp


def gcn_aggregate(Xp, graph: Graph) -> np.ndarray:
    return spmm(normalized_adjacency(graph), _check_signal(Xp, graph))


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def segment_softmax(scores: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Softmax of ``scores`` within each CSR row segment given by ``offsets``."""
    counts = np.diff(offsets)
    seg = np.repeat(np.arange(len(counts)), counts)
    peak = np.maximum.reduceat(scores, offsets[:-1])[seg]
    ex = np.exp(scores - peak)
    return ex / np.add.reduceat(ex, offsets[:-1])[seg]


def gat_attention(Xp, graph: Graph, a1, a2, leaky_slope: float = 0.2) -> SparseMatrix:
    """Attention weights on the pattern of A + I; every row sums to one."""
    Xp = _check_signal(Xp, graph)
    a1 = np.asarray(a1, dtype=np.float64).ravel()
    a2 = np.asarray(a2, dtype=np.float64).ravel()
    if a1.shape != (Xp.shape[1],) or a2.shape != (Xp.shape[1],):
        raise ValueError("attention vectors must match the feature dimension")
    a_hat = graph.adjacency_self_loop
    e = leaky_relu((Xp @ a1)[a_hat.row_ids] + (Xp @ a2)[a_hat.col_indices], leaky_slope)
    alpha = segment_softmax(e, a_hat.row_offsets)
    return SparseMatrix(a_hat.rows, a_hat.cols, a_hat.row_offsets, a_hat.col_indices, alpha)


def gat_aggregate(Xp, graph: Graph, a1, a2, leaky_slope: float = 0.2) -> np.ndarray:
    return spmm(gat_attention(Xp, graph, a1, a2, leaky_slope), Xp)


def ppnp_aggregate(Xp, alpha: float, graph: Graph, tol: float = 1e-10) -> np.ndarray:
    """Solve ``(I - (1 - alpha) A_tilde) H = alpha Xp`` by conjugate gradients."""
    _check_alpha(alpha)
    Xp = _check_signal(Xp, graph)
    if alpha == 1.0:
        return Xp.copy()
    a = normalized_adjacency(graph).scipy
    return solve_spd(lambda h: h - (1.0 - alpha) * (a @ h), alpha * Xp, tol=tol)


def appnp_aggregate(Xp, alpha: float, K: int, graph: Graph) -> np.ndarray:
    _check_alpha(alpha)
    _check_steps(K)
    Xp = _check_signal(Xp, graph)
    a = normalized_adjacency(graph)
    H = Xp
    for _ in range(K):
        H = (1.0 - alpha) * spmm(a, H) + alpha * Xp
    return H


def neighborhood_variance(Xp, graph: Graph) -> np.ndarray:
    """Per-channel population variance over each self-inclusive neighborhood."""
    Xp = _check_signal(Xp, graph)
    a_hat = graph.adjacency_self_loop
    d = graph.degrees_self_loop.astype(np.float64)[:, None]
    mean = spmm(a_hat, Xp) / d
    dev = Xp[a_hat.col_indices] - mean[a_hat.row_ids]
    return np.add.reduceat(dev * dev, a_hat.row_offsets[:-1], axis=0) / d


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def compute_smoothness_factors(Xp, graph: Graph, weights, bias: float, s: float) -> SmoothnessFactors:
    """``C_i = s * sigmoid(w . var_i + bias)`` and the matching per-node stepsizes."""
    if not s > 0:
        raise ValueError("s must be positive")
    var = neighborhood_variance(Xp, graph)
    C = s * sigmoid(var @ np.asarray(weights, dtype=np.float64).ravel() + bias)
    b, _ = adaptive_propagation(C, graph)
    return SmoothnessFactors(C, b)


def ada_ugnn_propagate(Xp, C, K: int, graph: Graph) -> np.ndarray:
    """K adaptive smoothing steps with fixed factors ``C``."""
    _check_steps(K)
    Xp = _check_signal(Xp, graph)
    b, M = adaptive_propagation(C, graph)
    return adaptive_propagate(Xp, b, M, K)


def ada_ugnn_aggregate(Xp, spec: AdaUGNN, graph: Graph) -> np.ndarray:
    factors = compute_smoothness_factors(Xp, graph, spec.weights, spec.bias, spec.s)
    return ada_ugnn_propagate(Xp, factors.C, spec.K, graph)


def aggregate(Xp, spec, graph: Graph) -> np.ndarray:
    """Dispatch on the aggregator spec type."""
    if isinstance(spec, GCN):
        return gcn_aggregate(Xp, graph)
    if isinstance(spec, GAT):
        return gat_aggregate(Xp, graph, spec.a1, spec.a2, spec.leaky_slope)
    if isinstance(spec, PPNP):
        return ppnp_aggregate(Xp, spec.alpha, graph)
    if isinstance(spec, APPNP):
        return appnp_aggregate(Xp, spec.alpha, spec.K, graph)
    if isinstance(spec, AdaUGNN):
        return ada_ugnn_aggregate(Xp, spec, graph)
    raise TypeError(f"unknown aggregator {spec!r}")
