"""Convert raw Planetoid files (ind.<name>.x, .tx, .allx, .y, .ty, .ally, .graph,
.test.index) into the TSV dataset directory read by ``ugnn.data.load_dataset``.

Uses the standard public split: the first 20 labeled nodes per class
(rows 0..len(y)-1) for training, the next 500 for validation and the
listed test indices for testing.

    python3 scripts/planetoid_to_tsv.py RAW_DIR cora data/cora
"""

import argparse
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ugnn.data import make_dataset, write_dataset
from ugnn.graph import build_graph


def _load(raw: Path, name: str, part: str):
    with open(raw / f"ind.{name}.{part}", "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def convert(raw: Path, name: str):
    x, y, tx, ty, allx, ally, adj_lists = (_load(raw, name, p) for p in ("x", "y", "tx", "ty", "allx", "ally", "graph"))
    test_idx = np.loadtxt(raw / f"ind.{name}.test.index", dtype=np.int64)
    test_sorted = np.sort(test_idx)
    features = sp.vstack([allx, tx]).tolil()
    features[test_idx, :] = features[test_sorted, :]
    onehot = np.vstack([ally, ty])
    onehot[test_idx, :] = onehot[test_sorted, :]
    n = features.shape[0]
    edges = np.array([(u, v) for u, vs in adj_lists.items() for v in vs if u != v], dtype=np.int64)
    graph = build_graph(edges, n)
    labels = onehot.argmax(axis=1)
    train = np.arange(y.shape[0])
    val = np.arange(y.shape[0], y.shape[0] + 500)
    return make_dataset(graph, features.toarray(), labels, train, val, test_sorted)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("raw_dir", type=Path)
    parser.add_argument("name", help="dataset prefix, e.g. cora")
    parser.add_argument("out_dir", type=Path)
    args = parser.parse_args(argv)
    ds = convert(args.raw_dir, args.name)
    write_dataset(ds, args.out_dir)
    print(f"{args.out_dir}: N={ds.num_nodes} d={ds.num_features} J={ds.num_classes} "
          f"edges={ds.graph.num_edges} nnz(A+I)={ds.graph.adjacency_self_loop.nnz}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
