"""``ugnn`` command-line entry point.

Every command prints a JSON run report on stdout. Exit codes: 0 ok,
1 verification failure, 2 usage or unsupported request, 3 numerical
abort, 4 I/O or data error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import denoising as dn
from .certify import certify_theorems, report_json
from .data import DatasetError, PerturbationSpec, load_dataset, load_signal, perturb_graph, read_edges, save_signal
from .graph import LaplacianKind, local_label_smoothness
from .linalg import SolverError
from .models import save_checkpoint
from .train import TrainConfig, TrainingDivergedError, learned_smoothness, train

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3, 4


class UsageError(ValueError):
    pass


def _report(command: str, config: dict, metrics: dict, started: float, seed, status: str = "ok") -> dict:
    return {
        "command": command,
        "config": config,
        "metrics": metrics,
        "timings": {"seconds": round(time.perf_counter() - started, 6)},
        "seed": seed,
        "status": status,
    }


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(f"{path.stem}_{suffix}.csv")


# --- verify -----------------------------------------------------------------

def cmd_verify(args) -> tuple[dict, int]:
    started = time.perf_counter()
    result = certify_theorems(args.seed, args.trials, args.max_nodes, gcn_step_scale=args.gcn_step_scale)
    if args.out:
        Path(args.out).write_text(report_json(result))
    failed = [name for name, t in result["theorems"].items() if t["status"] != "pass"]
    metrics = {name: {"max_abs_deviation": t["max_abs_deviation"], "status": t["status"]}
               for name, t in result["theorems"].items()}
    metrics["failed"] = failed
    config = {"seed": args.seed, "trials": args.trials, "max_nodes": args.max_nodes, "out": args.out,
              "gcn_step_scale": args.gcn_step_scale}
    status = "ok" if not failed else "failed"
    return _report("verify", config, metrics, started, args.seed, status), EXIT_OK if not failed else EXIT_VERIFY


# --- smoothness -------------------------------------------------------------

HIST_BINS = 20


def cmd_smoothness(args) -> tuple[dict, int]:
    started = time.perf_counter()
    ds = load_dataset(args.data)
    ls, isolated = local_label_smoothness(ds.graph, ds.labels, return_isolated=True)
    out = Path(args.out)
    deg = ds.graph.degrees
    _write_csv(out, ["node_id", "degree", "ls", "isolated"],
               ((i, int(deg[i]), repr(float(ls[i])), int(isolated[i])) for i in range(ds.num_nodes)))
    counts, edges = np.histogram(ls[~isolated], bins=HIST_BINS, range=(0.0, 1.0))
    hist = _sibling(out, "hist")
    _write_csv(hist, ["bin_lo", "bin_hi", "count"],
               ((f"{edges[k]:.2f}", f"{edges[k + 1]:.2f}", int(counts[k])) for k in range(HIST_BINS)))
    metrics = {
        "num_nodes": ds.num_nodes,
        "isolated": int(isolated.sum()),
        "mean_ls": float(ls[~isolated].mean()) if (~isolated).any() else None,
        "mode_bin": int(np.argmax(counts)),
        "histogram": hist.as_posix(),
    }
    return _report("smoothness", {"data": args.data, "out": args.out}, metrics, started, None), EXIT_OK


# --- denoise ----------------------------------------------------------------

def _float_or_vector(text: str, n: int) -> np.ndarray:
    try:
        return np.full(n, float(text))
    except ValueError:
        v = load_signal(text)
        if v.shape != (n, 1):
            raise UsageError(f"per-node coefficient file {text} must hold an ({n}, 1) signal") from None
        return v[:, 0]


def parse_regularizer(spec: str, num_nodes: int, seed: int):
    """Parse ``name:key=value,...`` into a regularizer.

    Names: ``global`` (c, kind), ``node`` (c), ``degnorm`` (C), ``pairnorm``
    (cp, cn), ``dropedge`` (q, seed) and ``trend`` (c). Per-node coefficients
    take a number or a path to a one-column signal file.
    """
    name, _, rest = spec.partition(":")
    try:
        kv = dict(item.split("=", 1) for item in rest.split(",") if item)
    except ValueError:
        raise UsageError(f"malformed regularizer {spec!r}; expected name:key=value,...") from None
    allowed = {"global": {"c", "kind"}, "node": {"c"}, "degnorm": {"C"}, "pairnorm": {"cp", "cn"},
               "dropedge": {"q", "seed"}, "trend": {"c"}}
    if name not in allowed:
        raise UsageError(f"unknown regularizer {name!r}; choose from {sorted(allowed)}")
    if set(kv) - allowed[name]:
        raise UsageError(f"{name} accepts {sorted(allowed[name])}, got {sorted(kv)}")
    try:
        if name == "global":
            return dn.GlobalLaplacian(float(kv.get("c", 1.0)), LaplacianKind.parse(kv.get("kind", "sym")))
        if name == "node":
            return dn.NodeAdaptive(_float_or_vector(kv.get("c", "1"), num_nodes))
        if name == "degnorm":
            return dn.DegreeNormalizedAdaptive(_float_or_vector(kv.get("C", "1"), num_nodes))
        if name == "pairnorm":
            return dn.PairNorm(float(kv["cp"]), float(kv["cn"]))
        if name == "dropedge":
            return dn.DropEdge(float(kv.get("q", 0.5)), int(kv.get("seed", seed)))
        return dn.TrendFilter(float(kv.get("c", 1.0)))
    except KeyError as exc:
        raise UsageError(f"{name} needs {exc.args[0]}=...") from None
    except (UsageError, DatasetError):
        raise
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad regularizer {spec!r}: {exc}") from None


def _solve(S, reg, graph, steps: int | None, stepsize: str | None) -> tuple[dn.DenoiseResult, str]:
    if isinstance(reg, dn.TrendFilter):
        if steps is not None:
            raise dn.UnsupportedSolverError("the trend-filter regularizer is nonsmooth and has no iterative solver; "
                                            "omit --steps to evaluate its objective")
        return dn.DenoiseResult(S.copy(), [dn.objective(S, S, reg, graph)]), "evaluate"
    sym = isinstance(reg, dn.GlobalLaplacian) and reg.kind is LaplacianKind.SYM_NORMALIZED_SELF_LOOP
    if steps is None:
        if not isinstance(reg, dn.GlobalLaplacian):
            raise dn.UnsupportedSolverError(f"{type(reg).__name__} has no closed-form solver; pass --steps")
        F = dn.closed_form_denoise(S, reg.c, graph, reg.kind)
        return dn.DenoiseResult(F, [dn.objective(S, S, reg, graph), dn.objective(F, S, reg, graph)]), "closed-form"
    if isinstance(reg, dn.DegreeNormalizedAdaptive):
        if stepsize not in (None, "adaptive"):
            raise dn.UnsupportedSolverError("degnorm uses its per-node stepsizes only")
        return dn.degree_normalized_adaptive_denoise(S, reg.C, steps, graph), "adaptive"
    if sym and stepsize in (None, "theorem"):
        return dn.gd_denoise(S, reg.c, dn.DenoiseConfig(steps), graph), "theorem"
    if stepsize in ("theorem", "adaptive"):
        raise dn.UnsupportedSolverError(f"stepsize {stepsize!r} is not defined for {type(reg).__name__}")
    b = None if stepsize is None else float(stepsize)
    return dn.generic_gd_denoise(S, reg, graph, steps, b), "fixed" if b else "default"


def cmd_denoise(args) -> tuple[dict, int]:
    started = time.perf_counter()
    ds = load_dataset(args.data)
    S = load_signal(args.signal)
    if S.shape[0] != ds.num_nodes:
        raise UsageError(f"signal has {S.shape[0]} rows but the graph has {ds.num_nodes} nodes")
    reg = parse_regularizer(args.reg, ds.num_nodes, args.seed)
    result, solver = _solve(S, reg, ds.graph, args.steps, args.stepsize)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_signal(out, result.F)
    trace = _sibling(out, "trace")
    _write_csv(trace, ["step", "objective"], ((k, repr(v)) for k, v in enumerate(result.objective_trace)))
    trace_arr = np.asarray(result.objective_trace)
    metrics = {
        "solver": solver,
        "initial_objective": float(trace_arr[0]),
        "final_objective": float(trace_arr[-1]),
        "nonincreasing": bool(np.all(np.diff(trace_arr) <= 1e-12 * np.maximum(1.0, np.abs(trace_arr[:-1])))),
        "trace": trace.as_posix(),
    }
    config = {"signal": args.signal, "data": args.data, "reg": args.reg, "steps": args.steps,
              "stepsize": args.stepsize, "out": args.out}
    return _report("denoise", config, metrics, started, args.seed), EXIT_OK


# --- train ------------------------------------------------------------------

GRID_FLAGS = {"lr": float, "wd": float, "dropout": float, "alpha": float, "k": int, "s": float, "hidden": int}


def _grid(args) -> list[dict]:
    axes = {}
    for flag, cast in GRID_FLAGS.items():
        try:
            axes[flag] = [cast(v) for v in str(getattr(args, flag)).split(",")]
        except ValueError:
            raise UsageError(f"--{flag} expects comma-separated numbers") from None
    keys = list(axes)
    return [dict(zip(keys, combo)) for combo in itertools.product(*axes.values())]


def _config(args, point: dict) -> TrainConfig:
    return TrainConfig(model=args.model, lr=point["lr"], weight_decay=point["wd"], dropout=point["dropout"],
                       epochs=args.epochs, patience=args.patience, seed=args.seed, alpha=point["alpha"],
                       K=point["k"], s=point["s"], hidden=point["hidden"], optimizer=args.optimizer)


def _train_best(args, ds):
    """Train every grid point; keep the best by validation accuracy (first on ties)."""
    runs, best = [], None
    for point in _grid(args):
        params, metrics = train(_config(args, point), ds)
        runs.append({"config": point, "val_accuracy": metrics.val_accuracy, "accuracy": metrics.accuracy})
        if best is None or metrics.val_accuracy > best[2].val_accuracy:
            best = (point, params, metrics)
    return best, runs


def _smoothness_rows(params, ds):
    C = learned_smoothness(params, ds)
    ls = local_label_smoothness(ds.graph, ds.labels)
    return C, ls, ((i, repr(float(C[i])), repr(float(ls[i]))) for i in range(ds.num_nodes))


def cmd_train(args) -> tuple[dict, int]:
    started = time.perf_counter()
    ds = load_dataset(args.data)
    (point, params, metrics), runs = _train_best(args, ds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, out / "checkpoint.json")
    blob = {"best_config": point, **metrics.to_json(), "grid": runs}
    (out / "metrics.json").write_text(json.dumps(blob, indent=2, sort_keys=True) + "\n")
    if params.variant == "ada-ugnn":
        _, _, rows = _smoothness_rows(params, ds)
        _write_csv(out / "smoothness.csv", ["node_id", "C", "ls"], rows)
    summary = {k: v for k, v in blob.items() if k not in ("train_loss", "val_loss", "grid")}
    summary["grid_size"] = len(runs)
    config = {"data": args.data, "model": args.model, "epochs": args.epochs, "patience": args.patience,
              "optimizer": args.optimizer, "out": args.out, **{f: getattr(args, f) for f in GRID_FLAGS}}
    return _report("train", config, summary, started, args.seed), EXIT_OK


# --- eval-robustness --------------------------------------------------------

_RATE = re.compile(r"(\d+(?:\.\d+)?)$")


def rate_from_name(path: Path) -> float:
    """Perturbation rate from a filename stem ending in a number; values above 1 are percents."""
    m = _RATE.search(path.stem)
    if m is None:
        raise UsageError(f"cannot read a perturbation rate from {path.name!r}")
    v = float(m.group(1))
    return v / 100.0 if v > 1 else v


def cmd_eval_robustness(args) -> tuple[dict, int]:
    started = time.perf_counter()
    ds = load_dataset(args.data)
    graphs = {0.0: ds.graph}
    if args.random_flip:
        for rate in (float(r) for r in args.random_flip.split(",")):
            graphs[rate] = perturb_graph(ds.graph, PerturbationSpec(rate, seed=args.seed), ds.labels)
    if args.graphs:
        files = sorted(Path(args.graphs).glob("*.tsv"))
        if not files:
            raise DatasetError(f"no .tsv edge files in {args.graphs}")
        for f in files:
            graphs[rate_from_name(f)] = read_edges(f, ds.num_nodes)
    rows, table = [], []
    for rate in sorted(graphs):
        pds = ds.with_graph(graphs[rate])
        (_, params, metrics), _ = _train_best(args, pds)
        ls, isolated = local_label_smoothness(pds.graph, pds.labels, return_isolated=True)
        low, high = metrics.per_group
        rec = {"perturb_rate": rate, "accuracy": metrics.accuracy, "low_accuracy": low, "high_accuracy": high,
               "mean_ls": float(ls[~isolated].mean()), "r": metrics.correlation}
        table.append(rec)
        rows.append([rec[k] if rec[k] is not None else "" for k in rec])
    out = Path(args.out)
    _write_csv(out, list(table[0]), rows)
    config = {"data": args.data, "graphs": args.graphs, "random_flip": args.random_flip, "model": args.model,
              "out": args.out, **{f: getattr(args, f) for f in GRID_FLAGS}}
    return _report("eval-robustness", config, {"rates": table}, started, args.seed), EXIT_OK


# --- argument parsing -------------------------------------------------------

def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--model", required=True, choices=("gcn", "gat", "appnp", "ada-ugnn"))
    p.add_argument("--lr", default="0.01")
    p.add_argument("--wd", default="5e-4", help="weight decay")
    p.add_argument("--dropout", default="0.5")
    p.add_argument("--alpha", default="0.1")
    p.add_argument("--k", default="10", help="propagation steps")
    p.add_argument("--s", default="9", help="upper bound of the smoothness factors")
    p.add_argument("--hidden", default="64")
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--optimizer", choices=("gd", "momentum", "adam"), default="gd")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ugnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="certify the aggregation/denoising equivalences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--max-nodes", type=int, default=8)
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--gcn-step-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("smoothness", help="local label smoothness per node")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="per-node CSV; the histogram goes to <stem>_hist.csv")
    p.set_defaults(func=cmd_smoothness)

    p = sub.add_parser("denoise", help="solve a graph signal denoising problem")
    p.add_argument("--signal", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--reg", required=True, help="e.g. global:c=1,kind=sym  node:c=0.5  degnorm:C=2  "
                                                "pairnorm:cp=1,cn=0.1  dropedge:q=0.3  trend:c=1")
    p.add_argument("--steps", type=int, help="iterations; omit for the closed form")
    p.add_argument("--stepsize", help="'theorem', 'adaptive' or a positive number")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="signal file; the trace goes to <stem>_trace.csv")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("train", help="train a node classifier; comma-separated values form a grid")
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-robustness", help="accuracy across perturbed graphs")
    _add_train_flags(p)
    p.add_argument("--graphs", help="directory of perturbed edge files named *_<rate>.tsv")
    p.add_argument("--random-flip", help="comma-separated rates for label-aware random flips")
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_eval_robustness)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "eval-robustness" and not (args.graphs or args.random_flip):
            raise UsageError("eval-robustness needs --graphs or --random-flip")
        report, code = args.func(args)
    except (UsageError, dn.UnsupportedSolverError) as exc:
        return _fail(args, str(exc), EXIT_USAGE)
    except (TrainingDivergedError, SolverError, FloatingPointError) as exc:
        return _fail(args, str(exc), EXIT_NUMERIC)
    except (OSError, DatasetError) as exc:
        return _fail(args, str(exc), EXIT_IO)
    except ValueError as exc:
        return _fail(args, str(exc), EXIT_USAGE)
    print(json.dumps(report, indent=2, sort_keys=True))
    return code


def _fail(args, message: str, code: int) -> int:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    report = {"command": args.command, "config": config, "metrics": {}, "timings": {},
              "seed": getattr(args, "seed", None), "status": "failed", "error": message}
    print(json.dumps(report, indent=2, sort_keys=True))
    print(f"ugnn {args.command}: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
