"""Graph signal denoising objectives and solvers.

Every problem here has the form ``min_F ||F - S||_F^2 + r(F)`` where the
regularizer ``r`` is one of the variants below. Signals are float64 arrays
of shape (N, d).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .graph import Graph, LaplacianKind, SparseMatrix, laplacian, normalized_adjacency, spmm
from .linalg import solve_spd


class UnsupportedSolverError(ValueError):
    """The requested regularizer cannot be minimized by this solver."""


class DegenerateNodeError(ZeroDivisionError):
    """A node's adaptive stepsize is undefined (all local weights zero)."""


# --- regularizers -----------------------------------------------------------

@dataclass(frozen=True)
class GlobalLaplacian:
    c: float
    kind: LaplacianKind = LaplacianKind.UNNORMALIZED

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("c must be nonnegative")
        object.__setattr__(self, "kind", LaplacianKind.parse(self.kind))


@dataclass(frozen=True)
class NodeAdaptive:
    """Per-node weights c_i on the self-inclusive neighborhood penalty."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64)
        if np.any(c < 0):
            raise ValueError("node weights must be nonnegative")
        object.__setattr__(self, "c", c)


@dataclass(frozen=True)
class DegreeNormalizedAdaptive:
    """Per-node smoothness factors C_i on degree-normalized differences."""

    C: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.C, dtype=np.float64)
        if np.any(C < 0):
            raise ValueError("smoothness factors must be nonnegative")
        object.__setattr__(self, "C", C)


@dataclass(frozen=True)
class PairNorm:
    cp: float
    cn: float

    def __post_init__(self):
        if self.cp <= 0 or self.cn <= 0:
            raise ValueError("PairNorm weights must be positive")


@dataclass(frozen=True)
class DropEdge:
    q: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("drop rate q must lie in [0, 1]")


@dataclass(frozen=True)
class TrendFilter:
    """``c * ||L F||_1`` with the unnormalized Laplacian. Evaluation only."""

    c: float

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("c must be nonnegative")


Regularizer = GlobalLaplacian | NodeAdaptive | DegreeNormalizedAdaptive | PairNorm | DropEdge | TrendFilter


def dropedge_mask(graph: Graph, q: float, seed: int) -> np.ndarray:
    """Boolean keep-mask over ``graph.edges``, Bernoulli with mean ``1 - q``.

    Uniforms come from a Philox stream keyed by ``seed``; the e-th draw
    belongs to the e-th canonical edge, so the mask does not depend on
    evaluation order or platform.
    """
    u = np.random.Generator(np.random.Philox(key=int(seed))).random(graph.num_edges)
    return u < 1.0 - q


def _edge_sqdiff(F: np.ndarray, graph: Graph, normalized: bool = False) -> np.ndarray:
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    if normalized:
        scale = 1.0 / np.sqrt(graph.degrees_self_loop.astype(np.float64))
        F = F * scale[:, None]
    diff = F[u] - F[v]
    return np.einsum("ij,ij->i", diff, diff)


def _weighted_laplacian(graph: Graph, w: np.ndarray) -> sparse.csr_matrix:
    """Laplacian of the graph with edge weights ``w`` (aligned with edges)."""
    n = graph.num_nodes
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    adj = sparse.coo_matrix(
        (np.concatenate([w, w]), (np.concatenate([u, v]), np.concatenate([v, u]))), shape=(n, n)
    ).tocsr()
    return sparse.diags(np.asarray(adj.sum(axis=1)).ravel()) - adj


def laplacian_quadratic_form(F: np.ndarray, graph: Graph, kind: LaplacianKind | str) -> float:
    """Trace form ``tr(F^T L F)``."""
    return float(np.sum(F * spmm(laplacian(graph, kind), F)))


def all_pairs_sqdiff(F: np.ndarray) -> float:
    """Sum of ||F_i - F_j||^2 over unordered pairs, via N*sum||F_i||^2 - ||sum F_i||^2."""
    total = F.sum(axis=0)
    return float(F.shape[0] * np.sum(F * F) - total @ total)


def pairnorm_nonedge_term(F: np.ndarray, graph: Graph) -> float:
    """Sum of ||F_i - F_j||^2 over unordered non-adjacent pairs."""
    return all_pairs_sqdiff(F) - float(_edge_sqdiff(F, graph).sum())


def regularizer(F: np.ndarray, reg: Regularizer, graph: Graph) -> float:
    if isinstance(reg, GlobalLaplacian):
        sym = reg.kind is LaplacianKind.SYM_NORMALIZED_SELF_LOOP
        return reg.c * float(_edge_sqdiff(F, graph, normalized=sym).sum())
    if isinstance(reg, NodeAdaptive):
        w = 0.5 * (reg.c[graph.edges[:, 0]] + reg.c[graph.edges[:, 1]])
        return float(w @ _edge_sqdiff(F, graph))
    if isinstance(reg, DegreeNormalizedAdaptive):
        w = 0.5 * (reg.C[graph.edges[:, 0]] + reg.C[graph.edges[:, 1]])
        return float(w @ _edge_sqdiff(F, graph, normalized=True))
    if isinstance(reg, PairNorm):
        edge = float(_edge_sqdiff(F, graph).sum())
        return reg.cp * edge - reg.cn * (all_pairs_sqdiff(F) - edge)
    if isinstance(reg, DropEdge):
        mask = dropedge_mask(graph, reg.q, reg.seed)
        return float(_edge_sqdiff(F, graph)[mask].sum())
    if isinstance(reg, TrendFilter):
        return reg.c * float(np.abs(spmm(laplacian(graph, LaplacianKind.UNNORMALIZED), F)).sum())
    raise TypeError(f"unknown regularizer {reg!r}")


def _check_shapes(F: np.ndarray, S: np.ndarray, graph: Graph) -> None:
    if F.shape != S.shape:
        raise ValueError(f"shape mismatch: F {F.shape} vs S {S.shape}")
    if F.ndim != 2 or F.shape[0] != graph.num_nodes:
        raise ValueError(f"signal must be (num_nodes, d), got {F.shape}")


def objective(F, S, reg: Regularizer, graph: Graph) -> float:
    """``||F - S||_F^2 + r(F)``."""
    F = np.asarray(F, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    _check_shapes(F, S, graph)
    return float(np.sum((F - S) ** 2)) + regularizer(F, reg, graph)


def _regularizer_hessian(reg: Regularizer, graph: Graph):
    """Sparse part of the regularizer Hessian (gradient = H @ F, up to PairNorm's dense term)."""
    n = graph.num_nodes
    ones = np.ones(graph.num_edges)
    if isinstance(reg, GlobalLaplacian):
        return 2.0 * reg.c * laplacian(graph, reg.kind).scipy
    if isinstance(reg, NodeAdaptive):
        return _weighted_laplacian(graph, reg.c[graph.edges[:, 0]] + reg.c[graph.edges[:, 1]])
    if isinstance(reg, DegreeNormalizedAdaptive):
        lw = _weighted_laplacian(graph, reg.C[graph.edges[:, 0]] + reg.C[graph.edges[:, 1]])
        scale = sparse.diags(1.0 / np.sqrt(graph.degrees_self_loop.astype(np.float64)))
        return scale @ lw @ scale
    if isinstance(reg, PairNorm):
        # edge part of both terms; the all-pairs part is applied densely
        return 2.0 * (reg.cp + reg.cn) * _weighted_laplacian(graph, ones)
    if isinstance(reg, DropEdge):
        mask = dropedge_mask(graph, reg.q, reg.seed).astype(np.float64)
        return 2.0 * _weighted_laplacian(graph, mask)
    if isinstance(reg, TrendFilter):
        raise UnsupportedSolverError("the trend-filter regularizer is nonsmooth; only objective evaluation is supported")
    raise TypeError(f"unknown regularizer {reg!r}")


def regularizer_gradient(F: np.ndarray, reg: Regularizer, graph: Graph) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    grad = np.asarray(_regularizer_hessian(reg, graph) @ F)
    if isinstance(reg, PairNorm):
        grad -= 2.0 * reg.cn * (F.shape[0] * F - F.sum(axis=0, keepdims=True))
    return grad


def objective_gradient(F, S, reg: Regularizer, graph: Graph) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    return 2.0 * (F - np.asarray(S, dtype=np.float64)) + regularizer_gradient(F, reg, graph)


def default_stepsize(reg: Regularizer, graph: Graph) -> float:
    """``1 / M`` where M bounds the objective Hessian's spectral radius (Gershgorin).

    Any stepsize up to ``2 / M`` gives monotone descent; ``1 / M`` leaves margin.
    """
    h = sparse.csr_matrix(_regularizer_hessian(reg, graph))
    bound = float(np.abs(h).sum(axis=1).max()) if h.nnz else 0.0
    if isinstance(reg, PairNorm):
        bound += 2.0 * reg.cn * 2 * graph.num_nodes
    return 1.0 / (2.0 + bound)


# --- solver configuration ---------------------------------------------------

@dataclass(frozen=True)
class DenoiseConfig:
    """Iteration count and stepsize policy.

    ``stepsize`` is a positive float (fixed step), ``"theorem"`` for
    ``b = 1 / (2 + 2c)``, or ``"adaptive"`` for per-node steps.
    """

    steps: int
    stepsize: float | str = "theorem"

    def __post_init__(self):
        if int(self.steps) < 1:
            raise ValueError("steps must be >= 1")
        if isinstance(self.stepsize, str):
            if self.stepsize not in ("theorem", "adaptive"):
                raise ValueError(f"unknown stepsize policy {self.stepsize!r}")
        elif not self.stepsize > 0:
            raise ValueError("stepsize must be positive")


@dataclass
class DenoiseResult:
    F: np.ndarray
    objective_trace: list[float] = field(default_factory=list)


# --- solvers ----------------------------------------------------------------

def closed_form_denoise(S, c: float, graph: Graph, kind: LaplacianKind | str = LaplacianKind.SYM_NORMALIZED_SELF_LOOP,
                        tol: float = 1e-10) -> np.ndarray:
    """Minimizer ``(I + cL)^{-1} S`` by conjugate gradients.

    Raises :class:`~ugnn.linalg.SolverError` when CG hits its iteration cap.
    """
    if c < 0:
        raise ValueError("c must be nonnegative")
    S = np.asarray(S, dtype=np.float64)
    if S.shape[0] != graph.num_nodes:
        raise ValueError("signal rows must equal num_nodes")
    if c == 0:
        return S.copy()
    lap = laplacian(graph, kind).scipy
    return solve_spd(lambda x: x + c * (lap @ x), S, tol=tol)


def gd_denoise(S, c: float, config: DenoiseConfig, graph: Graph) -> DenoiseResult:
    """Gradient descent on the global problem with ``L = I - A_tilde``.

    With the theorem stepsize each step is
    ``F <- S / (1 + c) + c / (1 + c) * A_tilde F``.
    """
    S = np.asarray(S, dtype=np.float64)
    if c < 0:
        raise ValueError("c must be nonnegative")
    if config.stepsize == "adaptive":
        raise UnsupportedSolverError("gd_denoise takes a fixed or theorem stepsize")
    reg = GlobalLaplacian(c, LaplacianKind.SYM_NORMALIZED_SELF_LOOP)
    a_tilde = normalized_adjacency(graph)
    F = S.copy()
    trace = [objective(F, S, reg, graph)]
    for _ in range(config.steps):
        if config.stepsize == "theorem":
            F = S / (1.0 + c) + (c / (1.0 + c)) * spmm(a_tilde, F)
        else:
            b = float(config.stepsize)
            F = (1.0 - 2 * b - 2 * b * c) * F + 2 * b * S + 2 * b * c * spmm(a_tilde, F)
        trace.append(objective(F, S, reg, graph))
    return DenoiseResult(F, trace)


def adaptive_step_coefficients(c, graph: Graph) -> SparseMatrix:
    """Row-stochastic matrix with entries ``b_i (c_i + c_j)`` over the self-inclusive neighborhood."""
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (graph.num_nodes,) or np.any(c < 0):
        raise ValueError("c must be a nonnegative per-node vector")
    a_hat = graph.adjacency_self_loop
    rows, cols = a_hat.row_ids, a_hat.col_indices
    w = c[rows] + c[cols]
    totals = np.zeros(graph.num_nodes)
    np.add.at(totals, rows, w)
    if np.any(totals == 0):
        bad = np.flatnonzero(totals == 0)
        raise DegenerateNodeError(f"adaptive stepsize undefined at nodes {bad.tolist()}: all local c are zero")
    b = 1.0 / totals
    return SparseMatrix(a_hat.rows, a_hat.cols, a_hat.row_offsets, a_hat.col_indices, b[rows] * w)


def adaptive_gd_step(S, c, graph: Graph) -> np.ndarray:
    """One gradient step from S on the node-adaptive problem with per-node steps ``b_i``."""
    return spmm(adaptive_step_coefficients(c, graph), S)


def adaptive_propagation(C, graph: Graph) -> tuple[np.ndarray, SparseMatrix]:
    """Stepsizes ``b`` and the propagation matrix of the degree-normalized iteration.

    ``b_i = 1 / (2 + sum_j (C_i + C_j) / d_i)`` and the matrix holds
    ``b_i (C_i + C_j) / sqrt(d_i d_j)`` for j in the self-inclusive
    neighborhood, so one step is ``F <- 2 b S + M F``.
    """
    C = np.asarray(C, dtype=np.float64)
    if C.shape != (graph.num_nodes,):
        raise ValueError("C must be a per-node vector")
    a_hat = graph.adjacency_self_loop
    rows, cols = a_hat.row_ids, a_hat.col_indices
    d = graph.degrees_self_loop.astype(np.float64)
    w = C[rows] + C[cols]
    totals = np.zeros(graph.num_nodes)
    np.add.at(totals, rows, w / d[rows])
    b = 1.0 / (2.0 + totals)
    vals = b[rows] * w / np.sqrt(d[rows] * d[cols])
    return b, SparseMatrix(a_hat.rows, a_hat.cols, a_hat.row_offsets, a_hat.col_indices, vals)


def adaptive_propagate(S, b: np.ndarray, M: SparseMatrix, K: int) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    anchor = 2.0 * b[:, None] * S
    F = S
    for _ in range(K):
        F = anchor + spmm(M, F)
    return F


def degree_normalized_adaptive_denoise(S, C, K: int, graph: Graph) -> DenoiseResult:
    """Iterative descent on the degree-normalized adaptive problem with per-node steps."""
    S = np.asarray(S, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    if np.any(C < 0):
        raise ValueError("C must be nonnegative")
    if K < 0:
        raise ValueError("K must be nonnegative")
    reg = DegreeNormalizedAdaptive(C)
    b, M = adaptive_propagation(C, graph)
    anchor = 2.0 * b[:, None] * S
    F = S
    trace = [objective(F, S, reg, graph)]
    for _ in range(K):
        F = anchor + spmm(M, F)
        trace.append(objective(F, S, reg, graph))
    return DenoiseResult(F, trace)


def generic_gd_denoise(S, reg: Regularizer, graph: Graph, steps: int, stepsize: float | None = None) -> DenoiseResult:
    """Plain gradient descent on ``||F - S||^2 + r(F)``.

    ``stepsize`` defaults to :func:`default_stepsize`. DropEdge masks are
    drawn once from the regularizer's seed and held fixed.
    """
    S = np.asarray(S, dtype=np.float64)
    if isinstance(reg, TrendFilter):
        raise UnsupportedSolverError("the trend-filter regularizer is nonsmooth; only objective evaluation is supported")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    b = default_stepsize(reg, graph) if stepsize is None else float(stepsize)
    if b <= 0:
        raise ValueError("stepsize must be positive")
    hess = _regularizer_hessian(reg, graph)  # fixes the DropEdge mask for all steps
    F = S.copy()
    trace = [objective(F, S, reg, graph)]
    for _ in range(steps):
        grad = 2.0 * (F - S) + hess @ F
        if isinstance(reg, PairNorm):
            grad -= 2.0 * reg.cn * (F.shape[0] * F - F.sum(axis=0, keepdims=True))
        F = F - b * grad
        trace.append(objective(F, S, reg, graph))
    return DenoiseResult(F, trace)
