"""Undirected graphs, CSR matrices, Laplacians and label smoothness."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse


class GraphError(ValueError):
    """Raised for malformed graph input."""


class LaplacianKind(enum.Enum):
    UNNORMALIZED = "unnormalized"  # D - A
    UNNORMALIZED_SELF_LOOP = "self-loop"  # D_hat - A_hat
    SYM_NORMALIZED_SELF_LOOP = "sym"  # I - A_tilde

    @classmethod
    def parse(cls, value: "str | LaplacianKind") -> "LaplacianKind":
        if isinstance(value, cls):
            return value
        for kind in cls:
            if value in (kind.value, kind.name, kind.name.lower()):
                return kind
        raise ValueError(f"unknown Laplacian kind {value!r}")


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Compressed sparse row matrix with float64 values.

    ``row_offsets`` has ``rows + 1`` entries; column indices are strictly
    increasing inside every row.
    """

    rows: int
    cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        offsets = self.row_offsets
        if offsets.shape != (self.rows + 1,) or offsets[0] != 0:
            raise ValueError("row_offsets must have length rows + 1 and start at 0")
        if np.any(np.diff(offsets) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if offsets[-1] != len(self.col_indices) or len(self.values) != len(self.col_indices):
            raise ValueError("row_offsets, col_indices and values disagree on nnz")
        if len(self.col_indices) and (self.col_indices.min() < 0 or self.col_indices.max() >= self.cols):
            raise ValueError("column index out of range")
        steps = np.diff(self.col_indices)
        same_row = np.diff(self.row_ids) == 0
        if np.any(steps[same_row] <= 0):
            raise ValueError("column indices must be strictly increasing within a row")

    @classmethod
    def from_coo(cls, rows: int, cols: int, r, c, v) -> "SparseMatrix":
        """Build from coordinate triplets; duplicates are summed."""
        m = sparse.coo_matrix(
            (np.asarray(v, dtype=np.float64), (np.asarray(r), np.asarray(c))), shape=(rows, cols)
        ).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        return cls.from_scipy(m)

    @classmethod
    def from_scipy(cls, m) -> "SparseMatrix":
        m = sparse.csr_matrix(m, dtype=np.float64)
        m.sort_indices()
        return cls(
            m.shape[0],
            m.shape[1],
            m.indptr.astype(np.int64),
            m.indices.astype(np.int64),
            m.data.astype(np.float64),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @cached_property
    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry (COO row array)."""
        return np.repeat(np.arange(self.rows), np.diff(self.row_offsets))

    @cached_property
    def scipy(self) -> sparse.csr_matrix:
        return sparse.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=self.shape
        )

    def to_dense(self) -> np.ndarray:
        return self.scipy.toarray()

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self.scipy.T.tocsr())

    def is_symmetric(self, tol: float = 0.0) -> bool:
        """Pairwise check that entry (i, j) equals entry (j, i)."""
        if self.rows != self.cols:
            return False
        diff = self.scipy - self.scipy.T
        return diff.nnz == 0 or float(np.abs(diff.data).max()) <= tol

    def row_sums(self) -> np.ndarray:
        out = np.zeros(self.rows)
        np.add.at(out, self.row_ids, self.values)
        return out


def spmm(m: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse-dense product ``m @ x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != m.cols:
        raise ValueError(f"dimension mismatch: matrix has {m.cols} columns, signal has {x.shape[0]} rows")
    return np.asarray(m.scipy @ x)


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected, unweighted simple graph.

    Edges are stored once each as canonical ``(min, max)`` pairs sorted
    lexicographically; symmetrization happens when matrices are built.
    """

    num_nodes: int
    edges: np.ndarray  # (E, 2) int64
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.num_nodes).astype(np.int64)

    @cached_property
    def degrees_self_loop(self) -> np.ndarray:
        return self.degrees + 1

    @property
    def num_entries_self_loop(self) -> int:
        """Stored entries of A + I, i.e. ``2|E| + N``."""
        return 2 * self.num_edges + self.num_nodes

    @cached_property
    def adjacency(self) -> SparseMatrix:
        """Binary adjacency A (no self-loops)."""
        u, v = self.edges[:, 0], self.edges[:, 1]
        r = np.concatenate([u, v])
        c = np.concatenate([v, u])
        return SparseMatrix.from_coo(self.num_nodes, self.num_nodes, r, c, np.ones(len(r)))

    @cached_property
    def adjacency_self_loop(self) -> SparseMatrix:
        """A + I."""
        u, v = self.edges[:, 0], self.edges[:, 1]
        idx = np.arange(self.num_nodes)
        r = np.concatenate([u, v, idx])
        c = np.concatenate([v, u, idx])
        return SparseMatrix.from_coo(self.num_nodes, self.num_nodes, r, c, np.ones(len(r)))

    def neighbors(self, i: int, self_loop: bool = False) -> np.ndarray:
        a = self.adjacency_self_loop if self_loop else self.adjacency
        return a.col_indices[a.row_offsets[i]:a.row_offsets[i + 1]]

    def has_edge(self, i: int, j: int) -> bool:
        return bool(np.isin(j, self.neighbors(i)))

    def is_connected(self) -> bool:
        n, _ = sparse.csgraph.connected_components(self.adjacency.scipy, directed=False)
        return n == 1


def build_graph(edge_list, num_nodes: int) -> Graph:
    """Symmetrize, deduplicate and drop self-loops from ``edge_list``.

    Raises
    ------
    GraphError
        If ``num_nodes`` is not positive or an endpoint is out of range.
    """
    num_nodes = int(num_nodes)
    if num_nodes <= 0:
        raise GraphError("num_nodes must be positive")
    e = np.asarray(edge_list, dtype=np.int64).reshape(-1, 2)
    if len(e) and (e.min() < 0 or e.max() >= num_nodes):
        bad = int(np.flatnonzero((e < 0).any(1) | (e >= num_nodes).any(1))[0])
        raise GraphError(f"edge {bad} {tuple(e[bad])} has an endpoint outside [0, {num_nodes})")
    e = np.sort(e, axis=1)
    e = e[e[:, 0] != e[:, 1]]
    e = np.unique(e, axis=0) if len(e) else np.zeros((0, 2), dtype=np.int64)
    return Graph(num_nodes, e)


def normalized_adjacency(graph: Graph) -> SparseMatrix:
    """D_hat^{-1/2} (A + I) D_hat^{-1/2}."""
    cache = graph._cache
    if "a_tilde" not in cache:
        a_hat = graph.adjacency_self_loop
        inv_sqrt = 1.0 / np.sqrt(graph.degrees_self_loop.astype(np.float64))
        vals = inv_sqrt[a_hat.row_ids] * inv_sqrt[a_hat.col_indices]
        cache["a_tilde"] = SparseMatrix(
            a_hat.rows, a_hat.cols, a_hat.row_offsets, a_hat.col_indices, vals
        )
    return cache["a_tilde"]


def laplacian(graph: Graph, kind: LaplacianKind | str = LaplacianKind.UNNORMALIZED) -> SparseMatrix:
    kind = LaplacianKind.parse(kind)
    cache = graph._cache
    key = ("laplacian", kind)
    if key in cache:
        return cache[key]
    n = graph.num_nodes
    eye = sparse.identity(n, format="csr")
    if kind is LaplacianKind.UNNORMALIZED:
        lap = sparse.diags(graph.degrees.astype(np.float64)) - graph.adjacency.scipy
    elif kind is LaplacianKind.UNNORMALIZED_SELF_LOOP:
        # D_hat - A_hat: the self-loop cancels, leaving D - A
        lap = sparse.diags(graph.degrees_self_loop.astype(np.float64)) - graph.adjacency_self_loop.scipy
    else:
        lap = eye - normalized_adjacency(graph).scipy
    lap = sparse.csr_matrix(lap)
    lap.eliminate_zeros()
    cache[key] = SparseMatrix.from_scipy(lap)
    return cache[key]


def local_label_smoothness(graph: Graph, labels, return_isolated: bool = False):
    """Fraction of each node's neighbors (self excluded) sharing its label.

    Isolated nodes have no neighbors; they get 1.0 and are flagged in the
    optional second return value.
    """
    labels = np.asarray(labels)
    if labels.shape != (graph.num_nodes,):
        raise ValueError("labels must have one entry per node")
    a = graph.adjacency
    same = (labels[a.row_ids] == labels[a.col_indices]).astype(np.float64)
    counts = np.diff(a.row_offsets)
    agree = np.zeros(graph.num_nodes)
    np.add.at(agree, a.row_ids, same)
    isolated = counts == 0
    ls = np.where(isolated, 1.0, agree / np.maximum(counts, 1))
    if return_isolated:
        return ls, isolated
    return ls
