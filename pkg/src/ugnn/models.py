"""Node-classification models built from the autograd primitives.

GCN and GAT stack two transform+aggregate layers with a ReLU in between.
APPNP and ADA-UGNN run a two-layer MLP down to class logits and then
propagate those logits K times over the graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from .data import Dataset
from .graph import Graph, SparseMatrix, normalized_adjacency

VARIANTS = ("gcn", "gat", "appnp", "ada-ugnn")


@dataclass
class ModelParams:
    variant: str
    layers: list[tuple[np.ndarray, np.ndarray]]  # (W, bias) per transform layer
    gat_vectors: list[tuple[np.ndarray, np.ndarray]] | None = None  # (a1, a2) columns per GAT layer
    ada_head: tuple[np.ndarray, np.ndarray] | None = None  # (w (J, 1), bias (1,)) over channel variances
    alpha: float = 0.1
    K: int = 10
    s: float = 9.0
    leaky_slope: float = 0.2

    def arrays(self) -> list[np.ndarray]:
        """Every learnable array, in a fixed order."""
        out = [a for pair in self.layers for a in pair]
        for pair in self.gat_vectors or []:
            out.extend(pair)
        if self.ada_head is not None:
            out.extend(self.ada_head)
        return out

    def decayed(self) -> list[bool]:
        """Which of :meth:`arrays` receive weight decay (matrices yes, biases no)."""
        flags = [flag for _ in self.layers for flag in (True, False)]
        flags += [True, True] * len(self.gat_vectors or [])
        if self.ada_head is not None:
            flags += [True, False]
        return flags

    def with_arrays(self, arrays: list[np.ndarray]) -> "ModelParams":
        it = iter(arrays)
        layers = [(next(it), next(it)) for _ in self.layers]
        gat = [(next(it), next(it)) for _ in self.gat_vectors] if self.gat_vectors is not None else None
        head = (next(it), next(it)) if self.ada_head is not None else None
        return ModelParams(self.variant, layers, gat, head, self.alpha, self.K, self.s, self.leaky_slope)

    def copy(self) -> "ModelParams":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "hyper": {"alpha": self.alpha, "K": self.K, "s": self.s, "leaky_slope": self.leaky_slope},
            "structure": {
                "layers": len(self.layers),
                "gat_layers": None if self.gat_vectors is None else len(self.gat_vectors),
                "ada_head": self.ada_head is not None,
            },
            "arrays": [{"shape": list(a.shape), "values": a.ravel().tolist()} for a in self.arrays()],
        }

    @classmethod
    def from_json(cls, blob: dict) -> "ModelParams":
        arrays = [np.array(a["values"], dtype=np.float64).reshape(a["shape"]) for a in blob["arrays"]]
        st, hy = blob["structure"], blob["hyper"]
        shell = cls(
            blob["variant"],
            [(None, None)] * st["layers"],
            None if st["gat_layers"] is None else [(None, None)] * st["gat_layers"],
            (None, None) if st["ada_head"] else None,
            hy["alpha"], hy["K"], hy["s"], hy["leaky_slope"],
        )
        return shell.with_arrays(arrays)


def save_checkpoint(params: ModelParams, path) -> None:
    Path(path).write_text(json.dumps(params.to_json()) + "\n")


def load_checkpoint(path) -> ModelParams:
    return ModelParams.from_json(json.loads(Path(path).read_text()))


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(variant: str, in_dim: int, hidden: int, num_classes: int, seed: int = 0,
                alpha: float = 0.1, K: int = 10, s: float = 9.0, leaky_slope: float = 0.2) -> ModelParams:
    if variant not in VARIANTS:
        raise ValueError(f"unknown model variant {variant!r}; choose from {VARIANTS}")
    rng = np.random.default_rng(seed)
    layers = [
        (_uniform(rng, in_dim, (in_dim, hidden)), np.zeros(hidden)),
        (_uniform(rng, hidden, (hidden, num_classes)), np.zeros(num_classes)),
    ]
    gat = None
    if variant == "gat":
        gat = [(_uniform(rng, d, (d, 1)), _uniform(rng, d, (d, 1))) for d in (hidden, num_classes)]
    head = None
    if variant == "ada-ugnn":
        head = (np.zeros((num_classes, 1)), np.zeros(1))  # starts as APPNP with C_i = s/2
    return ModelParams(variant, layers, gat, head, alpha, K, s, leaky_slope)


@dataclass
class GraphOperators:
    """Constant sparse operators shared by every forward pass on one graph."""

    graph: Graph
    a_tilde: SparseMatrix = field(init=False)
    mean_hat: SparseMatrix = field(init=False)  # D_hat^{-1} (A + I)

    def __post_init__(self):
        self.a_tilde = normalized_adjacency(self.graph)
        a_hat = self.graph.adjacency_self_loop
        d = self.graph.degrees_self_loop.astype(np.float64)
        self.mean_hat = SparseMatrix(a_hat.rows, a_hat.cols, a_hat.row_offsets, a_hat.col_indices,
                                     1.0 / d[a_hat.row_ids])


def operators(graph: Graph) -> GraphOperators:
    ops = graph._cache.get("model_ops")
    if ops is None:
        ops = graph._cache["model_ops"] = GraphOperators(graph)
    return ops


def _dropout(x: ag.Tensor, rate: float, rng: np.random.Generator | None) -> ag.Tensor:
    if rng is None or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep


def _params_as_tensors(params: ModelParams, leaves: list[ag.Tensor] | None) -> list[ag.Tensor]:
    if leaves is not None:
        return leaves
    return [ag.Tensor(a) for a in params.arrays()]


def _gat_layer(x: ag.Tensor, W, b, a1, a2, slope: float, graph: Graph) -> ag.Tensor:
    a_hat = graph.adjacency_self_loop
    rows, cols = a_hat.row_ids, a_hat.col_indices
    xp = x @ W
    scores = ag.gather_rows(xp @ a1, rows) + ag.gather_rows(xp @ a2, cols)
    att = ag.segment_softmax(ag.leaky_relu(scores, slope), a_hat.row_offsets)
    return ag.segment_sum(ag.gather_rows(xp, cols) * att, rows, graph.num_nodes) + b


def smoothness_factors(logits: ag.Tensor, head_w: ag.Tensor, head_b: ag.Tensor, s: float, graph: Graph) -> ag.Tensor:
    """``C = s * sigmoid(var_nbhd(logits) @ w + b)`` as an (N, 1) tensor."""
    return s * ag.sigmoid(ag.neighborhood_variance(logits, graph) @ head_w + head_b)


def ada_propagate(xp: ag.Tensor, C: ag.Tensor, K: int, ops: GraphOperators) -> ag.Tensor:
    """Differentiable form of the adaptive smoothing iteration.

    ``b = 1 / (2 + C + mean_nbhd(C))`` and each step computes
    ``H <- 2 b Xp + b * (C * A_tilde H + A_tilde (C * H))``.
    """
    b = ag.reciprocal(2.0 + C + ag.spmm(ops.mean_hat, C))
    anchor = 2.0 * b * xp
    H = xp
    for _ in range(K):
        H = anchor + b * (C * ag.spmm(ops.a_tilde, H) + ag.spmm(ops.a_tilde, C * H))
    return H


def forward(params: ModelParams, features, graph: Graph, dropout_rate: float = 0.0,
            rng: np.random.Generator | None = None, leaves: list[ag.Tensor] | None = None):
    """Logits tensor and, for ADA-UGNN, the (N, 1) smoothness-factor tensor.

    Dropout is applied to feature activations only when ``rng`` is given.
    """
    t = _params_as_tensors(params, leaves)
    ops = operators(graph)
    x = _dropout(ag.Tensor(features), dropout_rate, rng)
    (W1, b1), (W2, b2) = (t[0], t[1]), (t[2], t[3])
    C = None
    if params.variant == "gcn":
        h = ag.relu(ag.spmm(ops.a_tilde, x @ W1) + b1)
        h = _dropout(h, dropout_rate, rng)
        out = ag.spmm(ops.a_tilde, h @ W2) + b2
    elif params.variant == "gat":
        a = t[4:8]
        h = ag.relu(_gat_layer(x, W1, b1, a[0], a[1], params.leaky_slope, graph))
        h = _dropout(h, dropout_rate, rng)
        out = _gat_layer(h, W2, b2, a[2], a[3], params.leaky_slope, graph)
    else:
        h = _dropout(ag.relu(x @ W1 + b1), dropout_rate, rng)
        xp = h @ W2 + b2
        if params.variant == "appnp":
            out = xp
            for _ in range(params.K):
                out = (1.0 - params.alpha) * ag.spmm(ops.a_tilde, out) + params.alpha * xp
        else:
            C = smoothness_factors(xp, t[4], t[5], params.s, graph)
            out = ada_propagate(xp, C, params.K, ops)
    return out, C


def forward_model(params: ModelParams, dataset: Dataset, train_mode: bool = False,
                  dropout_rate: float = 0.0, seed: int = 0) -> np.ndarray:
    """Logits as a plain array; dropout is active only in ``train_mode``."""
    rng = np.random.default_rng(seed) if train_mode else None
    out, _ = forward(params, dataset.features, dataset.graph, dropout_rate, rng)
    return out.value
