"""Command-line interface: sparsify, verify, bench.

Every run emits one structured stats record (JSON with sorted keys) that
validates against STATS_SCHEMA. The only nondeterministic field is
wall_clock_sec; everything else is a pure function of the seed and flags.

Exit codes:
  0  success
  2  input parse failure (also argparse usage errors)
  3  invalid parameter value
  4  disconnected input graph
  5  safety cap abort
  6  verification threshold exceeded
  7  numerical failure (barrier violation or solver stall)
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .errors import (BarrierViolationError, ConfigError, DisconnectedGraphError,
                     GraphFormatError, SolverConvergenceError)
from .fastpath import EstimatorConfig
from .graphs import generate, load_graph, save_graph, verify_sparsifier
from .sparsifier import RunCaps, run_almost_linear, run_randomized_bss
from .vectorset import VectorSet, extract_sparsifier, from_graph

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_CONFIG = 3
EXIT_DISCONNECTED = 4
EXIT_CAP_ABORT = 5
EXIT_THRESHOLD = 6
EXIT_NUMERICAL = 7

# published schema: key -> (type(s), required)
STATS_SCHEMA = {
    "schema_version": (int, True),
    "command": (str, True),
    "algorithm": (str, True),
    "mode": (str, True),
    "input": (str, True),
    "format": (str, True),
    "n_vertices": (int, True),
    "subspace_dim": (int, True),
    "n_vectors": (int, True),
    "q": ((int, type(None)), True),
    "eps": (float, True),
    "seed": (int, True),
    "iterations": (int, True),
    "total_samples": (int, True),
    "nonzero_count": (int, True),
    "final_u": (float, True),
    "final_ell": (float, True),
    "rescale": (float, True),
    "aborted": (bool, True),
    "abort_reason": ((str, type(None)), True),
    "estimator": ((dict, type(None)), True),
    "log": (dict, True),
    "wall_clock_sec": (float, True),
}

LOG_COLUMNS = ("batch_target", "draws", "delta_u", "delta_ell",
               "sum_resistance", "min_gap", "phi_before", "phi_after",
               "half_barrier_ok")


def validate_stats_record(record: dict) -> None:
    """Raise ConfigError if a stats record does not match the schema."""
    for key, (types, required) in STATS_SCHEMA.items():
        if key not in record:
            if required:
                raise ConfigError(f"stats record missing key {key!r}")
            continue
        if not isinstance(record[key], types):
            raise ConfigError(
                f"stats key {key!r} has type {type(record[key]).__name__}")
    log_cols = record["log"]
    lengths = {len(log_cols[c]) for c in LOG_COLUMNS if c in log_cols}
    if missing := [c for c in LOG_COLUMNS if c not in log_cols]:
        raise ConfigError(f"stats log missing columns {missing}")
    if len(lengths) > 1:
        raise ConfigError("stats log columns have unequal lengths")


def _setup_logging():
    level = os.environ.get("SPARSEKIT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _estimator_from_args(args) -> EstimatorConfig | None:
    fields = {}
    if getattr(args, "eta", None) is not None:
        fields["eta"] = args.eta
    if getattr(args, "taylor_degree", None) is not None:
        fields["taylor_degree"] = args.taylor_degree
    if getattr(args, "jl_dim", None) is not None:
        fields["jl_dim"] = args.jl_dim
    if getattr(args, "solver_tol", None) is not None:
        fields["solver_tol"] = args.solver_tol
    if getattr(args, "trace_k", None) is not None:
        fields["trace_k"] = args.trace_k
    if getattr(args, "trace_probes", None) is not None:
        fields["trace_probes"] = args.trace_probes
    if getattr(args, "solver", None) is not None:
        fields["solver"] = args.solver
    if getattr(args, "lambda_refresh", None) is not None:
        fields["lambda_refresh"] = args.lambda_refresh
    if getattr(args, "est_eps", None) is not None:
        fields["eps"] = args.est_eps
    if not fields:
        return None
    return EstimatorConfig(**fields)


def _estimator_dict(cfg: EstimatorConfig | None) -> dict | None:
    if cfg is None:
        return None
    return {
        "eps": cfg.eps, "eta": cfg.eta, "taylor_c": cfg.taylor_c,
        "taylor_degree": cfg.taylor_degree, "jl_dim": cfg.jl_dim,
        "solver_tol": cfg.solver_tol, "trace_k": cfg.trace_k,
        "trace_probes": cfg.trace_probes, "solver": cfg.solver,
        "lambda_refresh": cfg.lambda_refresh, "lambda_safety": cfg.lambda_safety,
    }


def _load_input(path: str, fmt: str):
    """Returns (vector_set, graph_or_None)."""
    if fmt == "npz":
        data = np.load(path)
        if "vectors" not in data:
            raise GraphFormatError("npz input needs a 'vectors' array")
        vectors = np.asarray(data["vectors"], dtype=float)
        kernel = np.asarray(data["kernel"], dtype=float) if "kernel" in data else None
        vs = VectorSet(dim=vectors.shape[1], vectors=vectors, kernel=kernel)
        return vs, None
    g = load_graph(path, fmt)
    return from_graph(g), g


def _write_stats(record: dict, path: str | None) -> None:
    validate_stats_record(record)
    text = json.dumps(record, sort_keys=True)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_sparsify(args) -> int:
    started = time.perf_counter()
    vs, g = _load_input(args.input, args.format)
    est = _estimator_from_args(args)
    caps = RunCaps(max_iterations=args.max_iterations,
                   max_samples=args.max_samples)
    if args.algo == "almost-linear":
        result = run_almost_linear(vs, q=args.q, eps=args.eps, mode=args.mode,
                                   seed=args.seed, caps=caps, estimator=est,
                                   strict_resample=args.strict_resample)
    else:
        result = run_randomized_bss(vs, eps=args.eps, seed=args.seed, caps=caps)

    if args.out:
        if g is not None:
            save_graph(extract_sparsifier(g, result), args.out, args.format
                       if args.format in ("tsv", "mtx") else "tsv")
        else:
            rescaled = result.scalars * result.rescale
            with open(args.out, "w", encoding="utf-8") as fh:
                for value in rescaled:
                    fh.write(f"{value!r}\n")

    record = {
        "schema_version": 1,
        "command": "sparsify",
        "algorithm": result.algorithm,
        "mode": result.mode,
        "input": args.input,
        "format": args.format,
        "n_vertices": g.n_vertices if g is not None else vs.dim,
        "subspace_dim": vs.subspace_dim,
        "n_vectors": vs.n_vectors,
        "q": args.q if args.algo == "almost-linear" else None,
        "eps": args.eps,
        "seed": args.seed,
        "iterations": result.iterations,
        "total_samples": result.total_samples,
        "nonzero_count": result.nonzero_count,
        "final_u": result.final_u,
        "final_ell": result.final_ell,
        "rescale": result.rescale,
        "aborted": result.aborted,
        "abort_reason": result.abort_reason,
        "estimator": _estimator_dict(est),
        "log": result.log.as_columns(),
        "wall_clock_sec": time.perf_counter() - started,
    }
    _write_stats(record, args.stats)
    if result.aborted:
        print(f"aborted: {result.abort_reason}", file=sys.stderr)
        return EXIT_CAP_ABORT
    return EXIT_OK


def cmd_verify(args) -> int:
    started = time.perf_counter()
    g = load_graph(args.base, args.format)
    g2 = load_graph(args.candidate, args.format)
    report = verify_sparsifier(g, g2, n_probe=args.probes, seed=args.seed)
    record = {
        "schema_version": 1,
        "command": "verify",
        "base": args.base,
        "candidate": args.candidate,
        "lambda_lo": report.lambda_lo,
        "lambda_hi": report.lambda_hi,
        "epsilon_achieved": report.epsilon_achieved,
        "edges_in": report.edges_in,
        "edges_out": report.edges_out,
        "quad_form_samples": report.quad_form_samples,
        "threshold": args.threshold,
        "wall_clock_sec": time.perf_counter() - started,
    }
    text = json.dumps(record, sort_keys=True)
    if args.stats:
        with open(args.stats, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    if report.epsilon_achieved > args.threshold:
        return EXIT_THRESHOLD
    return EXIT_OK


def _bench_cell(cell):
    """Worker for one bench cell; returns the stats dict."""
    family, size, eps, algo, mode, seed, q, est_fields = cell
    started = time.perf_counter()
    if family == "complete":
        g = generate("complete", n=size)
    elif family == "grid":
        g = generate("grid", rows=size, cols=size)
    elif family == "barbell":
        g = generate("barbell", left=size // 2, right=size - size // 2)
    else:
        g = generate("erdos_renyi", n=size, p=0.2, seed=seed)
    vs = from_graph(g)
    est = EstimatorConfig(**est_fields) if est_fields else None
    if algo == "almost-linear":
        result = run_almost_linear(vs, q=q, eps=eps, mode=mode, seed=seed,
                                   estimator=est)
    else:
        result = run_randomized_bss(vs, eps=eps, seed=seed)
    report = verify_sparsifier(g, extract_sparsifier(g, result), seed=seed)
    return {
        "schema_version": 1,
        "command": "bench",
        "family": family,
        "size": size,
        "n_vertices": g.n_vertices,
        "n_edges": g.n_edges,
        "algorithm": result.algorithm,
        "mode": mode,
        "q": q if algo == "almost-linear" else None,
        "eps": eps,
        "seed": seed,
        "iterations": result.iterations,
        "total_samples": result.total_samples,
        "nonzero_count": result.nonzero_count,
        "aborted": result.aborted,
        "epsilon_achieved": report.epsilon_achieved,
        "edges_out": report.edges_out,
        "wall_clock_sec": time.perf_counter() - started,
    }


def cmd_bench(args) -> int:
    est = _estimator_from_args(args)
    est_fields = {}
    if est is not None:
        est_fields = {k: v for k, v in _estimator_dict(est).items()
                      if v is not None and k != "lambda_safety" and k != "taylor_c"}
    cells = []
    for family in args.families.split(","):
        for size in (int(s) for s in args.sizes.split(",")):
            for eps in (float(e) for e in args.eps_list.split(",")):
                for algo in args.algos.split(","):
                    for mode in args.modes.split(","):
                        for s in range(args.n_seeds):
                            cells.append((family.strip(), size, eps,
                                          algo.strip(), mode.strip(),
                                          args.seed + s, args.q, est_fields))
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            records = list(pool.map(_bench_cell, cells))
    else:
        records = [_bench_cell(c) for c in cells]
    lines = [json.dumps(r, sort_keys=True) for r in records]
    if args.stats:
        with open(args.stats, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return EXIT_OK


def _add_estimator_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eta", type=float, default=None,
                   help="barrier separation for the Taylor degree rule")
    p.add_argument("--taylor-degree", type=int, default=None, dest="taylor_degree",
                   help="explicit Taylor degree override")
    p.add_argument("--jl-dim", type=int, default=None, dest="jl_dim",
                   help="sketch rows for resistance estimation")
    p.add_argument("--solver-tol", type=float, default=None, dest="solver_tol",
                   help="relative residual tolerance of the linear solver")
    p.add_argument("--trace-k", type=int, default=None, dest="trace_k",
                   help="trace power for extreme-eigenvalue estimation")
    p.add_argument("--trace-probes", type=int, default=None, dest="trace_probes",
                   help="probe vectors per trace estimate")
    p.add_argument("--solver", choices=("pcg", "direct", "pinv"), default=None,
                   help="linear solver backend")
    p.add_argument("--lambda-refresh", type=int, default=None, dest="lambda_refresh",
                   help="iterations between eigenvalue-estimate refreshes")
    p.add_argument("--est-eps", type=float, default=None, dest="est_eps",
                   help="target accuracy of the fast estimators")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsekit",
        description="Spectral sparsification of graphs by barrier-guided sampling")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sparsify", help="sparsify a graph or vector set")
    sp.add_argument("input", help="edge-list TSV, Matrix Market Laplacian, or npz")
    sp.add_argument("--algo", choices=("almost-linear", "rbss"),
                    default="almost-linear")
    sp.add_argument("--mode", choices=("exact", "fast"), default="exact")
    sp.add_argument("--q", type=int, default=10)
    sp.add_argument("--eps", type=float, default=0.05)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--format", choices=("tsv", "mtx", "npz"), default="tsv")
    sp.add_argument("--out", default=None, help="sparsifier output path")
    sp.add_argument("--stats", default=None, help="stats record path")
    sp.add_argument("--strict-resample", action="store_true",
                    dest="strict_resample",
                    help="redraw batches that fail the half-barrier check")
    sp.add_argument("--max-iterations", type=int, default=None)
    sp.add_argument("--max-samples", type=int, default=None)
    _add_estimator_flags(sp)
    sp.set_defaults(func=cmd_sparsify)

    vf = sub.add_parser("verify", help="exact spectral comparison of two graphs")
    vf.add_argument("base")
    vf.add_argument("candidate")
    vf.add_argument("--format", choices=("tsv", "mtx"), default="tsv")
    vf.add_argument("--threshold", type=float, default=float("inf"))
    vf.add_argument("--probes", type=int, default=16)
    vf.add_argument("--seed", type=int, default=0)
    vf.add_argument("--stats", default=None)
    vf.set_defaults(func=cmd_verify)

    bench = sub.add_parser("bench", help="generate/sparsify/verify sweeps")
    bench.add_argument("--families", default="complete")
    bench.add_argument("--sizes", default="20",
                       help="comma list; side length for grid, n otherwise")
    bench.add_argument("--eps-list", default="0.05", dest="eps_list")
    bench.add_argument("--algos", default="almost-linear")
    bench.add_argument("--modes", default="exact")
    bench.add_argument("--q", type=int, default=10)
    bench.add_argument("--n-seeds", type=int, default=1, dest="n_seeds")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--workers", type=int, default=1)
    bench.add_argument("--stats", default=None)
    _add_estimator_flags(bench)
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GraphFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DisconnectedGraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DISCONNECTED
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BarrierViolationError, SolverConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
