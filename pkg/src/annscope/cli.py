"""Command line entry point: ``annscope {generate,build,search,analyze}``.

stdout carries one JSON summary per run; diagnostics go to stderr. Any
flag may also come from ``--config FILE`` (``key = value`` lines, ``#``
comments, ``dataset`` may repeat); explicit flags win over the file.
Exit status: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import DatasetError, generate_synthetic, load_vectors, write_ivecs, write_vectors
from .graph import DEFAULT_K, DEFAULT_MOD_CAP, EdgeStrategy, build_graph, load_graph, save_graph
from .harness import (
    DatasetSpec,
    ExperimentConfig,
    run_cc_vs_k,
    run_cc_vs_recall,
    run_scc_tables,
    run_theorem1,
    run_two_phase,
)
from .search import SearchParams, batch_search, default_threads, write_traces_jsonl

log = logging.getLogger("annscope")

TABLES = ("cc-vs-k", "cc-vs-recall", "scc", "two-phase", "theorem1")

# per-subcommand fallbacks, applied after flags and config file
DEFAULTS = {
    "generate": {"kind": "uniform", "n": 1000, "dim": 32, "clusters": 1, "spread": 0.05, "format": None},
    "build": {"k": DEFAULT_K, "strategy": "directed", "cap": str(DEFAULT_MOD_CAP), "format": None},
    "search": {"k": 10, "L": None, "entry": None, "format": "jsonl", "threads": None},
    "analyze": {
        "K": "20", "strategy": "undirected", "cap": str(DEFAULT_MOD_CAP), "n_queries": 100,
        "k": 20, "L": None, "trials": 200, "threads": None, "dataset": None,
    },
}
REQUIRED = {
    "generate": ("seed", "out"),
    "build": ("input", "out"),
    "search": ("graph", "input", "queries", "seed", "out"),
    "analyze": ("table", "seed", "out_dir"),
}


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="annscope", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value config file; flags override it")

    g = sub.add_parser("generate", help="write a seeded synthetic dataset")
    common(g)
    g.add_argument("--kind", choices=["uniform", "gaussian_clusters"])
    g.add_argument("--n", type=int)
    g.add_argument("--dim", type=int)
    g.add_argument("--clusters", type=int)
    g.add_argument("--spread", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--format", choices=["fvecs", "csv"])
    g.add_argument("--out")

    b = sub.add_parser("build", help="build a search graph from vectors")
    common(b)
    b.add_argument("--input", help="vector file (fvecs or csv)")
    b.add_argument("--format", choices=["fvecs", "csv"])
    b.add_argument("--k", type=int, help=f"neighbors per vertex, K (default {DEFAULT_K})")
    b.add_argument("--strategy", choices=[s.value for s in EdgeStrategy])
    b.add_argument("--cap", help=f"max out-degree or 'none' (default {DEFAULT_MOD_CAP})")
    b.add_argument("--out")

    s = sub.add_parser("search", help="run traced searches for a query file")
    common(s)
    s.add_argument("--graph")
    s.add_argument("--input", help="the dataset the graph was built on")
    s.add_argument("--queries", help="query vector file")
    s.add_argument("--k", type=int)
    s.add_argument("--L", type=int, help="beam width (default k)")
    s.add_argument("--seed", type=int, help="entry-point seed (required)")
    s.add_argument("--entry", type=int, help="fixed entry vertex")
    s.add_argument("--format", choices=["jsonl", "ivecs"])
    s.add_argument("--threads", type=int)
    s.add_argument("--out")

    a = sub.add_parser("analyze", help="run an experiment table")
    common(a)
    a.add_argument("--table", choices=TABLES)
    a.add_argument("--dataset", action="append",
                   help="dataset spec, e.g. uniform,n=20000,dim=32,seed=1 (repeatable)")
    a.add_argument("--K", help="comma-separated graph K values")
    a.add_argument("--strategy", help="comma-separated strategies")
    a.add_argument("--cap")
    a.add_argument("--n-queries", type=int)
    a.add_argument("--k", type=int)
    a.add_argument("--L", type=int)
    a.add_argument("--seed", type=int)
    a.add_argument("--trials", type=int, help="theorem1 trial count")
    a.add_argument("--threads", type=int)
    a.add_argument("--out-dir")
    return p


def read_config(path) -> dict:
    out: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, val = (x.strip() for x in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "dataset":
            out.setdefault("dataset", []).append(val)
        else:
            out[key] = val
    return out


def _merge(parser, args) -> argparse.Namespace:
    cmd = args.command
    sub = parser._subparsers._group_actions[0].choices[cmd]
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    cfg = read_config(args.config) if args.config else {}
    for key, val in cfg.items():
        if key not in actions:
            raise UsageError(f"unknown config key {key!r} for {cmd}")
        if getattr(args, key) is None:
            act = actions[key]
            if key != "dataset" and act.type is not None:
                val = act.type(val)
            if act.choices is not None and val not in act.choices:
                raise UsageError(f"config {key}={val!r}: choose from {sorted(act.choices)}")
            setattr(args, key, val)
    for key, val in DEFAULTS.get(cmd, {}).items():
        if getattr(args, key, None) is None:
            setattr(args, key, val)
    missing = [k for k in REQUIRED[cmd] if getattr(args, k, None) is None]
    if missing:
        raise UsageError("missing required: " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return args


def _cap(text):
    if text is None or str(text).lower() == "none":
        return None
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"--cap must be an integer or 'none', got {text!r}") from None


def _atomic_target(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    return Path(tmp)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")
    sys.stdout.flush()


# ------------------------------------------------------------------ commands

def cmd_generate(args) -> dict:
    data = generate_synthetic(args.kind, args.n, args.dim, seed=args.seed,
                              clusters=args.clusters, spread=args.spread)
    out = Path(args.out)
    tmp = _atomic_target(out)
    try:
        fmt = args.format or out.suffix.lstrip(".")
        write_vectors(data, tmp, fmt=fmt)
        os.replace(tmp, out)
    finally:
        tmp.unlink(missing_ok=True)
    return {"out": str(out), "n": data.n, "dim": data.dim, "kind": args.kind, "seed": args.seed}


def cmd_build(args) -> dict:
    data = load_vectors(args.input, fmt=args.format)
    cap = _cap(args.cap)
    t0 = time.perf_counter()
    g = build_graph(data, args.k, args.strategy, cap)
    elapsed = time.perf_counter() - t0
    out = Path(args.out)
    tmp = _atomic_target(out)
    try:
        save_graph(g, tmp)
        os.replace(tmp, out)
    finally:
        tmp.unlink(missing_ok=True)
    return {
        "out": str(out),
        "n": g.n,
        "K": g.K,
        "strategy": g.strategy.value,
        "mod_cap": g.mod_cap,
        "edges": g.n_edges,
        "mean_out_degree": float(g.out_degrees().mean()),
        "build_seconds": round(elapsed, 4),
    }


def cmd_search(args) -> dict:
    L = args.L if args.L is not None else args.k
    if L < args.k:
        raise UsageError(f"--L ({L}) must be >= --k ({args.k})")
    data = load_vectors(args.input)
    g = load_graph(args.graph)
    queries = load_vectors(args.queries)
    if queries.dim != data.dim:
        raise DatasetError(f"query dimension {queries.dim} != dataset dimension {data.dim}")
    params = SearchParams(k=args.k, L=L, entry=args.entry, seed=args.seed)
    traces = batch_search(g, data, queries.vectors.astype(np.float64), params,
                          threads=args.threads or default_threads())
    out = Path(args.out)
    tmp = _atomic_target(out)
    try:
        if args.format == "jsonl":
            write_traces_jsonl(traces, tmp)
        else:
            write_ivecs(tmp, np.vstack([t.result.ids for t in traces]))
        os.replace(tmp, out)
    finally:
        tmp.unlink(missing_ok=True)
    return {
        "out": str(out),
        "queries": len(traces),
        "k": args.k,
        "L": L,
        "mean_hops": float(np.mean([t.hop_count for t in traces])) if traces else 0.0,
        "format": args.format,
    }


def _split_list(text, conv=str):
    return [conv(x.strip()) for x in str(text).split(",") if x.strip()]


def cmd_analyze(args) -> dict:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".annscope-", dir=out))
    try:
        if args.table == "theorem1":
            result = run_theorem1(n_trials=args.trials, seed=args.seed, out_dir=str(stage))
        else:
            if not args.dataset:
                raise UsageError(f"--table {args.table} needs at least one --dataset")
            try:
                strategies = [EdgeStrategy(s).value for s in _split_list(args.strategy)]
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            config = ExperimentConfig(
                datasets=[DatasetSpec.parse(d) for d in args.dataset],
                K_list=_split_list(args.K, int),
                strategies=strategies,
                mod_cap=_cap(args.cap),
                n_queries=args.n_queries,
                k=args.k,
                L=args.L if args.L is not None else args.k,
                seed=args.seed,
                out_dir=str(stage),
                threads=args.threads or default_threads(),
            )
            if args.table == "cc-vs-k":
                result = {"rows": run_cc_vs_k(config)}
            elif args.table == "cc-vs-recall":
                rep = run_cc_vs_recall(config)
                result = {"cells": [c.summary() for c in rep.cells], "pearson": rep.correlations}
            elif args.table == "scc":
                result = {"rows": run_scc_tables(config)}
            else:
                tables = run_two_phase(config)
                result = {"means": {k: v[-1] for k, v in tables.items()}}
        files = sorted(p.name for p in stage.iterdir())
        for name in files:
            os.replace(stage / name, out / name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return {"table": args.table, "out_dir": str(out), "files": files, "result": result}


COMMANDS = {
    "generate": cmd_generate,
    "build": cmd_build,
    "search": cmd_search,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args = _merge(parser, args)
        summary = COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"annscope {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"annscope {args.command}: error: {exc}", file=sys.stderr)
        return 1
    _emit(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
