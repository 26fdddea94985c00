"""Acceptance criteria 1-9, one test each.

Every test records a single PASS/FAIL line that is printed in the pytest
terminal summary. Criteria that need the Cora citation graph look for a
dataset directory (edges.tsv, features.tsv, labels.tsv, split.json) at
``$UGNN_CORA_DIR`` or ``data/cora`` under the repository root; without it
they fail and say so.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_graph
from ugnn import autograd as ag
from ugnn.aggregators import ada_ugnn_propagate, appnp_aggregate
from ugnn.certify import random_connected_graph
from ugnn.cli import main
from ugnn.data import PerturbationSpec, homophilic_sbm_dataset, load_dataset, path_dataset, perturb_graph
from ugnn.denoising import (
    DenoiseConfig,
    DropEdge,
    GlobalLaplacian,
    NodeAdaptive,
    PairNorm,
    degree_normalized_adaptive_denoise,
    gd_denoise,
    generic_gd_denoise,
    pairnorm_nonedge_term,
)
from ugnn.graph import local_label_smoothness, normalized_adjacency
from ugnn.models import forward, init_params
from ugnn.train import TrainConfig, train

from test_denoising import brute_force_nonedge, nonincreasing

ROOT = Path(__file__).resolve().parents[1]
CORA_DIR = Path(os.environ.get("UGNN_CORA_DIR", ROOT / "data" / "cora"))

REFERENCE_ACCURACY = {"gcn": 81.75, "appnp": 84.49, "ada-ugnn": 84.79}
REFERENCE_LOW_GROUP = {"appnp": 38.40, "ada-ugnn": 40.17}

# Reduced version of the published grid; see the decisions ledger.
CORA_BASE = dict(lr=0.01, weight_decay=5e-4, hidden=64, epochs=1000, patience=50, optimizer="adam", alpha=0.1, K=10)
CORA_GRID = {
    "gcn": [dict(dropout=d) for d in (0.5, 0.8)],
    "appnp": [dict(dropout=d) for d in (0.5, 0.8)],
    "ada-ugnn": [dict(dropout=d, s=s) for d in (0.5, 0.8) for s in (1.0, 9.0)],
}


def record(number: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def require_cora(number: int):
    if not (CORA_DIR / "edges.tsv").is_file():
        msg = f"Cora dataset not found at {CORA_DIR} (set UGNN_CORA_DIR)"
        record(number, False, msg)
        pytest.fail(msg)
    return load_dataset(CORA_DIR)


_cora_runs: dict = {}


def best_cora_run(model: str, dataset):
    """Best-of-grid (by validation accuracy) run on Cora, cached across criteria."""
    if model not in _cora_runs:
        best, slowest = None, 0.0
        for point in CORA_GRID[model]:
            started = time.perf_counter()
            params, metrics = train(TrainConfig(model=model, **{**CORA_BASE, **point}), dataset)
            slowest = max(slowest, time.perf_counter() - started)
            if best is None or metrics.val_accuracy > best[1].val_accuracy:
                best = (params, metrics)
        _cora_runs[model] = (*best, slowest)
    return _cora_runs[model]


def test_criterion_1_theorem_certification(tmp_path, capsys):
    started = time.perf_counter()
    codes = []
    for seed in range(10):
        codes.append(main(["verify", "--seed", str(seed), "--trials", "100", "--max-nodes", "8",
                           "--out", str(tmp_path / f"verify_{seed}.json")]))
    capsys.readouterr()
    elapsed = time.perf_counter() - started
    ok = all(c == 0 for c in codes) and elapsed < 60
    record(1, ok, f"verify exit codes {codes} for seeds 0-9, {elapsed:.1f} s (limit 60 s)")
    assert ok


def test_criterion_2_special_case_reduction():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        g = random_connected_graph(rng, 3, 12)
        x = rng.normal(size=(g.num_nodes, int(rng.integers(1, 4))))
        c, K = float(rng.uniform(0.01, 30)), int(rng.integers(1, 20))
        got = ada_ugnn_propagate(x, np.full(g.num_nodes, c), K, g)
        worst = max(worst, float(np.abs(got - appnp_aggregate(x, 1 / (1 + c), K, g)).max()))
    ok = worst <= 1e-12
    record(2, ok, f"max |ADA(C=c) - APPNP(1/(1+c))| = {worst:.2e} over 100 instances (tol 1e-12)")
    assert ok


def _primitive_checks(rng):
    g = random_graph(rng, 6, p=0.6)
    n = g.num_nodes
    a_hat, a_tilde = g.adjacency_self_loop, normalized_adjacency(g)
    labels = rng.integers(0, 3, size=n)
    x = rng.normal(size=(n, 3))
    return {
        "add": (lambda t: ag.tsum((t[0] + t[1]) * t[0]), [x, rng.normal(size=3)]),
        "sub": (lambda t: ag.tsum((t[0] - t[1]) * t[0]), [x, rng.normal(size=(n, 1))]),
        "mul": (lambda t: ag.tsum(t[0] * t[1] * t[0]), [x, rng.normal(size=(1, 3))]),
        "neg": (lambda t: ag.tsum(-t[0] * t[0]), [x]),
        "matmul": (lambda t: ag.tsum((t[0] @ t[1]) * (t[0] @ t[1])), [x, rng.normal(size=(3, 2))]),
        "spmm": (lambda t: ag.tsum(ag.spmm(a_tilde, t[0]) * t[0]), [x]),
        "reciprocal": (lambda t: ag.tsum(ag.reciprocal(t[0])), [rng.uniform(0.5, 2, (n, 3))]),
        "relu": (lambda t: ag.tsum(ag.relu(t[0]) * t[0]), [x + 0.05 * np.sign(x)]),
        "leaky_relu": (lambda t: ag.tsum(ag.leaky_relu(t[0], 0.2) * t[0]), [x + 0.05 * np.sign(x)]),
        "sigmoid": (lambda t: ag.tsum(ag.sigmoid(t[0]) * t[0]), [x]),
        "segment_softmax": (lambda t: ag.tsum(ag.segment_softmax(t[0], a_hat.row_offsets) * t[1]),
                            [rng.normal(size=(a_hat.nnz, 1)), rng.normal(size=(a_hat.nnz, 1))]),
        "neighborhood_variance": (lambda t: ag.tsum(ag.neighborhood_variance(t[0], g) * t[1]),
                                  [x, rng.normal(size=(n, 3))]),
        "gather_rows": (lambda t: ag.tsum(ag.gather_rows(t[0], a_hat.col_indices) * t[1]),
                        [x, rng.normal(size=(a_hat.nnz, 3))]),
        "segment_sum": (lambda t: ag.tsum(ag.segment_sum(t[0], a_hat.row_ids, n) * t[1]),
                        [rng.normal(size=(a_hat.nnz, 3)), x]),
        "softmax_cross_entropy": (lambda t: ag.softmax_cross_entropy(t[0], labels, labels != 0), [x]),
        "sum": (lambda t: ag.tsum(t[0] * t[0]), [x]),
    }


def test_criterion_3_gradient_checks():
    started = time.perf_counter()
    rng = np.random.default_rng(3)
    errors = {}
    for name, (fn, arrays) in _primitive_checks(rng).items():
        errors[name] = ag.gradcheck(fn, arrays)
    missing = ag.SUPPORTED - {"leaf"} - set(errors)

    ds = homophilic_sbm_dataset(num_classes=2, per_class=3, p_in=0.9, p_out=0.3, num_features=3,
                                train_per_class=2, val_per_class=1, seed=1)
    p = init_params("ada-ugnn", ds.num_features, 4, ds.num_classes, seed=0, K=2, s=3.0)
    arrays = [a + 0.5 * rng.normal(size=a.shape) for a in p.arrays()]

    def loss(leaves):
        out, _ = forward(p, ds.features, ds.graph, leaves=leaves)
        return ag.softmax_cross_entropy(out, ds.labels, ds.train_mask)

    end_to_end = ag.gradcheck(loss, arrays)
    elapsed = time.perf_counter() - started
    worst = max(errors, key=errors.get)
    ok = not missing and errors[worst] < 1e-4 and end_to_end < 1e-3 and ds.num_nodes <= 6 and elapsed < 30
    record(3, ok, f"{len(errors)} primitives, worst {worst} rel err {errors[worst]:.1e} (tol 1e-4); "
                  f"ADA-UGNN end-to-end N={ds.num_nodes} rel err {end_to_end:.1e} (tol 1e-3); {elapsed:.1f} s"
                  + (f"; unchecked: {sorted(missing)}" if missing else ""))
    assert ok


def test_criterion_4_monotone_descent():
    rng = np.random.default_rng(4)
    failures = []
    for t in range(100):
        g = random_connected_graph(rng, 3, 12)
        n = g.num_nodes
        S = rng.normal(size=(n, 2))
        c = float(rng.uniform(0, 10))
        traces = {
            "gd_denoise": gd_denoise(S, c, DenoiseConfig(20), g).objective_trace,
            "degree_normalized": degree_normalized_adaptive_denoise(S, rng.uniform(0, 10, n), 20, g).objective_trace,
            "generic/node": generic_gd_denoise(S, NodeAdaptive(rng.uniform(0, 5, n)), g, 20).objective_trace,
            "generic/pairnorm": generic_gd_denoise(S, PairNorm(1.0, 0.05), g, 20).objective_trace,
            "generic/dropedge": generic_gd_denoise(S, DropEdge(0.3, t), g, 20).objective_trace,
            "generic/global": generic_gd_denoise(S, GlobalLaplacian(c), g, 20).objective_trace,
        }
        failures += [f"{name}@{t}" for name, tr in traces.items() if not nonincreasing(tr)]
    ok = not failures
    record(4, ok, f"6 solvers x 100 instances, nonincreasing traces; violations: {failures[:5] or 'none'}")
    assert ok


def test_criterion_5_cora_accuracy():
    ds = require_cora(5)
    acc, slowest = {}, 0.0
    for model in REFERENCE_ACCURACY:
        _, metrics, t = best_cora_run(model, ds)
        acc[model], slowest = 100 * metrics.accuracy, max(slowest, t)
    within = all(abs(acc[m] - REFERENCE_ACCURACY[m]) <= 3.0 for m in acc)
    ordered = acc["ada-ugnn"] + 0.5 >= acc["appnp"] and acc["appnp"] + 0.5 >= acc["gcn"]
    ok = (within or ordered) and slowest < 300
    record(5, ok, ", ".join(f"{m} {acc[m]:.2f} (reference {REFERENCE_ACCURACY[m]})" for m in acc)
           + f"; within 3 pts: {within}; ordering: {ordered}; slowest run {slowest:.0f} s")
    assert ok


def test_criterion_6_cora_low_group():
    ds = require_cora(6)
    low = {m: best_cora_run(m, ds)[1].per_group[0] for m in REFERENCE_LOW_GROUP}
    ok = low["ada-ugnn"] is not None and low["appnp"] is not None and low["ada-ugnn"] - low["appnp"] >= -0.01
    record(6, ok, ", ".join(f"{m} low-smoothness accuracy {low[m]} (reference {REFERENCE_LOW_GROUP[m] / 100:.4f})"
                            for m in low) + "; need ada-ugnn - appnp >= -0.01")
    assert ok


CORRELATION_FIXTURE = dict(per_class=80, p_in=0.1, p_out=0.002, noise=2.0, train_per_class=20, seed=0)
CORRELATION_CONFIG = dict(lr=0.01, optimizer="adam", dropout=0.0, hidden=16, epochs=300, s=9.0, K=10)


def test_criterion_7_correlation_sign():
    base = homophilic_sbm_dataset(**CORRELATION_FIXTURE)
    r = {}
    for rate in (0.0, 0.25):
        ds = base.with_graph(perturb_graph(base.graph, PerturbationSpec(rate, seed=0), base.labels))
        runs = [train(TrainConfig("ada-ugnn", seed=s, **CORRELATION_CONFIG), ds)[1].correlation for s in range(3)]
        r[rate] = float(np.mean(runs))
    ok = r[0.25] > 0.2 and r[0.25] >= r[0.0] - 0.05
    record(7, ok, f"mean r(C, ls) over 3 seeds: {r[0.0]:.3f} at 0%, {r[0.25]:.3f} at 25% "
                  "(need r25 > 0.2 and r25 >= r0 - 0.05)")
    assert ok


def test_criterion_8_pairnorm_identity():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(100):
        g = random_graph(rng, int(rng.integers(1, 9)), p=float(rng.uniform(0.1, 0.9)))
        F = rng.normal(size=(g.num_nodes, int(rng.integers(1, 4))))
        worst = max(worst, abs(pairnorm_nonedge_term(F, g) - brute_force_nonedge(F, g)))
    ok = worst <= 1e-10
    record(8, ok, f"max |identity - enumeration| = {worst:.2e} over 100 graphs N<=8 (tol 1e-10)")
    assert ok


def test_criterion_9_smoothness_metric():
    ds = path_dataset()
    ls = local_label_smoothness(ds.graph, ds.labels).tolist()
    path_ok = ls == [1.0, 0.5, 0.0]
    if not (CORA_DIR / "edges.tsv").is_file():
        record(9, False, f"path ls = {ls} ({'exact' if path_ok else 'wrong'}); "
                         f"Cora dataset not found at {CORA_DIR}, histogram unchecked")
        pytest.fail("Cora dataset unavailable")
    cora = load_dataset(CORA_DIR)
    cls, isolated = local_label_smoothness(cora.graph, cora.labels, return_isolated=True)
    counts, _ = np.histogram(cls[~isolated], bins=20, range=(0.0, 1.0))
    mode_ok = int(np.argmax(counts)) == 19
    shape = (cora.num_nodes, cora.num_features, cora.num_classes, cora.graph.adjacency_self_loop.nnz)
    shape_ok = shape == (2708, 1433, 7, 13264)
    ok = path_ok and mode_ok and shape_ok
    record(9, ok, f"path ls = {ls}; Cora (N, d, J, nnz(A+I)) = {shape} (expect (2708, 1433, 7, 13264)); "
                  f"top-bin share {counts[-1] / counts.sum():.2f}, mode is top bin: {mode_ok}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
