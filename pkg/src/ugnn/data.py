"""Dataset directories, signal files and graph perturbation.

A dataset directory holds four files::

    edges.tsv     "u<TAB>v" per line, 0-indexed; '#' starts a comment
    features.tsv  N lines of d tab-separated reals
    labels.tsv    N lines, one integer class id each (-1 = unlabeled)
    split.json    {"train": [...], "val": [...], "test": [...]}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .graph import Graph, build_graph


class DatasetError(ValueError):
    """Malformed dataset or signal file."""


@dataclass(frozen=True, eq=False)
class Dataset:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1

    def mask(self, split: str) -> np.ndarray:
        try:
            return {"train": self.train_mask, "val": self.val_mask, "test": self.test_mask}[split]
        except KeyError:
            raise ValueError(f"unknown split {split!r}") from None

    def with_graph(self, graph: Graph) -> "Dataset":
        if graph.num_nodes != self.num_nodes:
            raise DatasetError("replacement graph has a different node universe")
        return replace(self, graph=graph)


def make_dataset(graph: Graph, features, labels, train, val, test) -> Dataset:
    """Validate and assemble a dataset from index lists."""
    n = graph.num_nodes
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[0] != n:
        raise DatasetError(f"features must have {n} rows, got shape {features.shape}")
    if labels.shape != (n,):
        raise DatasetError(f"labels must have {n} entries, got {labels.shape}")
    if np.any(labels < -1):
        bad = int(np.flatnonzero(labels < -1)[0])
        raise DatasetError(f"label out of range at node {bad}: {labels[bad]}")
    masks = []
    for name, ids in (("train", train), ("val", val), ("test", test)):
        ids = np.asarray(ids, dtype=np.int64)
        if len(ids) and (ids.min() < 0 or ids.max() >= n):
            raise DatasetError(f"{name} split references a node outside [0, {n})")
        if np.any(labels[ids] < 0):
            raise DatasetError(f"{name} split contains unlabeled nodes")
        m = np.zeros(n, dtype=bool)
        m[ids] = True
        masks.append(m)
    for (a, ma), (b, mb) in [(("train", masks[0]), ("val", masks[1])),
                             (("train", masks[0]), ("test", masks[2])),
                             (("val", masks[1]), ("test", masks[2]))]:
        if np.any(ma & mb):
            raise DatasetError(f"{a} and {b} splits overlap")
    return Dataset(graph, features, labels, *masks)


def _require(path: Path) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"missing dataset file: {path}")
    return path


def read_edges(path, num_nodes: int) -> Graph:
    pairs = []
    with open(_require(Path(path))) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DatasetError(f"{path}:{lineno}: expected 'u<TAB>v', got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-integer endpoint in {line!r}") from None
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise DatasetError(f"{path}:{lineno}: endpoint outside node universe [0, {num_nodes})")
            pairs.append((u, v))
    return build_graph(np.array(pairs, dtype=np.int64).reshape(-1, 2), num_nodes)


def _read_features(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(_require(path)) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise DatasetError(f"{path}:{lineno}: expected {width} values, got {len(parts)}")
            try:
                rows.append(np.array(parts, dtype=np.float64))
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-numeric feature value") from None
    if not rows:
        raise DatasetError(f"{path}: no feature rows")
    return np.vstack(rows)


def _read_labels(path: Path) -> np.ndarray:
    out = []
    with open(_require(path)) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: expected an integer label, got {line!r}") from None
    return np.array(out, dtype=np.int64)


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    features = _read_features(directory / "features.tsv")
    labels = _read_labels(directory / "labels.tsv")
    n = features.shape[0]
    if len(labels) != n:
        raise DatasetError(f"labels.tsv has {len(labels)} rows but features.tsv has {n}")
    graph = read_edges(directory / "edges.tsv", n)
    with open(_require(directory / "split.json")) as fh:
        split = json.load(fh)
    missing = {"train", "val", "test"} - set(split)
    if missing:
        raise DatasetError(f"split.json lacks {sorted(missing)}")
    return make_dataset(graph, features, labels, split["train"], split["val"], split["test"])


def write_dataset(dataset: Dataset, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_edges(dataset.graph, directory / "edges.tsv")
    np.savetxt(directory / "features.tsv", dataset.features, fmt="%.17g", delimiter="\t")
    np.savetxt(directory / "labels.tsv", dataset.labels, fmt="%d")
    split = {name: np.flatnonzero(dataset.mask(name)).tolist() for name in ("train", "val", "test")}
    (directory / "split.json").write_text(json.dumps(split) + "\n")
    return directory


def write_edges(graph: Graph, path) -> None:
    with open(path, "w") as fh:
        for u, v in graph.edges.tolist():
            fh.write(f"{u}\t{v}\n")


# --- signal files -----------------------------------------------------------

def save_signal(path, signal) -> None:
    """Write ``N<TAB>d`` then N rows of d reals at 17 significant digits."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 2 or signal.shape[1] == 0:
        raise DatasetError(f"signal must be a nonempty (N, d) matrix, got shape {signal.shape}")
    with open(path, "w") as fh:
        fh.write(f"{signal.shape[0]}\t{signal.shape[1]}\n")
        np.savetxt(fh, signal, fmt="%.17g", delimiter="\t")


def load_signal(path) -> np.ndarray:
    with open(_require(Path(path))) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DatasetError(f"{path}: header must be 'N<TAB>d'")
        n, d = int(header[0]), int(header[1])
        if n <= 0 or d <= 0:
            raise DatasetError(f"{path}: empty signal ({n} x {d})")
        values = []
        for lineno, line in enumerate(fh, 2):
            if not line.strip():
                continue
            row = line.split()
            if len(row) != d:
                raise DatasetError(f"{path}:{lineno}: expected {d} values, got {len(row)}")
            values.append([float(x) for x in row])
    if len(values) != n:
        raise DatasetError(f"{path}: header says {n} rows, payload has {len(values)}")
    return np.array(values, dtype=np.float64).reshape(n, d)


# --- perturbation -----------------------------------------------------------

@dataclass(frozen=True)
class PerturbationSpec:
    """``mode`` is ``"random-flip"`` or ``"precomputed"`` (edges read from ``path``)."""

    rate: float
    mode: str = "random-flip"
    seed: int = 0
    path: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("perturbation rate must lie in [0, 1]")
        if self.mode not in ("random-flip", "precomputed"):
            raise ValueError(f"unknown perturbation mode {self.mode!r}")
        if self.mode == "precomputed" and not self.path:
            raise ValueError("precomputed perturbation needs a path")


def perturb_graph(graph: Graph, spec: PerturbationSpec, labels=None) -> Graph:
    """Label-aware random edge flips, or replacement by a precomputed edge file.

    Random flips remove ``ceil(rate * |E| / 2)`` same-label edges and add
    as many cross-label non-edges, so the edge count is preserved.
    """
    if spec.mode == "precomputed":
        return read_edges(spec.path, graph.num_nodes)
    if spec.rate == 0:
        return graph
    if labels is None:
        raise ValueError("random-flip perturbation needs node labels")
    labels = np.asarray(labels)
    m = graph.num_edges
    if spec.rate * m < 1:
        raise ValueError(f"rate {spec.rate} flips no edges on a graph with {m} edges")
    k = math.ceil(spec.rate * m / 2)
    rng = np.random.default_rng(spec.seed)

    u, v = graph.edges[:, 0], graph.edges[:, 1]
    same = (labels[u] == labels[v]) & (labels[u] >= 0)
    removable = np.flatnonzero(same)
    if len(removable) < k:
        raise ValueError(f"only {len(removable)} same-label edges, need {k}")
    drop = rng.choice(removable, size=k, replace=False)

    labeled = np.flatnonzero(labels >= 0)
    counts = np.bincount(labels[labeled])
    cross_pairs = len(labeled) * (len(labeled) - 1) // 2 - int(np.sum(counts * (counts - 1) // 2))
    cross_edges = int(np.sum((labels[u] != labels[v]) & (labels[u] >= 0) & (labels[v] >= 0)))
    if cross_pairs - cross_edges < k:
        raise ValueError(f"only {cross_pairs - cross_edges} cross-label non-edges, need {k}")

    n = graph.num_nodes
    taken = set((u * n + v).tolist())
    added = []
    while len(added) < k:
        a = rng.choice(labeled, size=4 * k)
        b = rng.choice(labeled, size=4 * k)
        for x, y in zip(a.tolist(), b.tolist()):
            if labels[x] == labels[y]:
                continue
            x, y = min(x, y), max(x, y)
            key = x * n + y
            if key in taken:
                continue
            taken.add(key)
            added.append((x, y))
            if len(added) == k:
                break
    keep = np.ones(m, dtype=bool)
    keep[drop] = False
    edges = np.concatenate([graph.edges[keep], np.array(added, dtype=np.int64)])
    return build_graph(edges, n)


# --- synthetic fixtures -----------------------------------------------------

def two_cluster_dataset() -> Dataset:
    """Two 5-cliques joined by one bridge edge; features separate the clusters."""
    edges = [(i, j) for base in (0, 5) for i in range(base, base + 5) for j in range(i + 1, base + 5)]
    edges.append((4, 5))
    labels = np.array([0] * 5 + [1] * 5)
    offsets = np.linspace(-0.1, 0.1, 10)
    features = np.stack([1.0 - labels + offsets, labels + offsets[::-1]], axis=1)
    return make_dataset(build_graph(edges, 10), features, labels, [0, 9], [1, 8], [2, 3, 4, 5, 6, 7])


def homophilic_sbm_dataset(num_classes: int = 4, per_class: int = 60, p_in: float = 0.12, p_out: float = 0.01,
                           num_features: int = 16, noise: float = 1.5, train_per_class: int = 10,
                           val_per_class: int = 15, seed: int = 0) -> Dataset:
    """Stochastic block model with Gaussian class-conditional features."""
    rng = np.random.default_rng(seed)
    n = num_classes * per_class
    labels = np.repeat(np.arange(num_classes), per_class)
    iu, ju = np.triu_indices(n, k=1)
    p = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(len(iu)) < p
    graph = build_graph(np.stack([iu[keep], ju[keep]], axis=1), n)
    means = rng.normal(size=(num_classes, num_features))
    features = means[labels] + noise * rng.normal(size=(n, num_features))
    train, val, test = [], [], []
    for k in range(num_classes):
        ids = rng.permutation(np.flatnonzero(labels == k))
        train += ids[:train_per_class].tolist()
        val += ids[train_per_class:train_per_class + val_per_class].tolist()
        test += ids[train_per_class + val_per_class:].tolist()
    return make_dataset(graph, features, labels, sorted(train), sorted(val), sorted(test))


def path_dataset() -> Dataset:
    """3-node path a-b-c labelled [0, 0, 1]."""
    graph = build_graph([(0, 1), (1, 2)], 3)
    return make_dataset(graph, np.eye(3), [0, 0, 1], [0], [1], [2])
