"""Desk-scale experiment runner: CC vs K, CC vs recall, SCC tables, phases.

Every runner writes CSV files into its output directory plus a
``manifest-<table>.json`` listing artifacts and a hash of the config. Floats
are written with ``repr`` so aggregates recompute exactly from per-query rows.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .analysis import (
    AnalysisError,
    clustering_report,
    neighborhood_subgraph,
    pearson,
    phase_split,
    premise_holds,
    recall,
    scc_decompose,
    verify_theorem1,
)
from .dataset import (
    DatasetError,
    NeighborList,
    VectorDataset,
    generate_synthetic,
    knn_table,
    load_vectors,
    split_queries,
)
from .graph import DEFAULT_MOD_CAP, EdgeStrategy, build_graph
from .search import SearchParams, batch_search

log = logging.getLogger(__name__)

__all__ = [
    "DatasetSpec",
    "ExperimentConfig",
    "ExperimentReport",
    "CellResult",
    "evaluate_cells",
    "run_cc_vs_k",
    "run_cc_vs_recall",
    "run_scc_tables",
    "run_two_phase",
    "run_theorem1",
    "fmean",
    "CC_LADDER_SPREADS",
    "clustered_spec",
    "uniform_spec",
    "ladder_specs",
]

METADATA = {
    "distance": "squared euclidean",
    "hop_count": "number of expanded (popped) vertices",
    "uniform_kind": "uniform on the unit cube [0,1)^dim",
    "entry_rule": "uniform random vertex, generator seeded with (seed, query_index)",
    "phase_boundary": "first expansion of a core vertex",
    "queries": "held out from the same generator (out-of-sample)",
}

# spreads >= 0.3 keep the 100-cluster graph connected at 20k x 32d
CC_LADDER_SPREADS = (0.3, 0.35, 0.4, 0.5, 0.7, 1.0)


def fmean(values) -> float:
    values = list(values)
    if not values:
        return 0.0
    return math.fsum(values) / len(values)


@dataclass
class DatasetSpec:
    """A synthetic recipe or a vector file.

    Text form: ``kind,key=value,...`` e.g. ``uniform,n=20000,dim=32,seed=1``
    or ``file,path=base.fvecs,queries=q.fvecs``.
    """

    kind: str
    name: str = ""
    n: int = 20000
    dim: int = 32
    clusters: int = 1
    spread: float = 0.05
    seed: int = 0
    path: Optional[str] = None
    queries: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian_clusters", "file"):
            raise DatasetError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise DatasetError("file dataset needs path=")
        if not self.name:
            if self.kind == "file":
                self.name = Path(self.path).stem
            elif self.kind == "uniform":
                self.name = f"uniform-n{self.n}-d{self.dim}-s{self.seed}"
            else:
                self.name = f"clusters{self.clusters}-sp{self.spread:g}-n{self.n}-d{self.dim}-s{self.seed}"

    @classmethod
    def parse(cls, text: str) -> "DatasetSpec":
        head, *rest = [p.strip() for p in text.split(",") if p.strip()]
        kw: dict = {}
        types = {"n": int, "dim": int, "clusters": int, "seed": int, "spread": float}
        for item in rest:
            if "=" not in item:
                raise DatasetError(f"bad dataset option {item!r} (want key=value)")
            key, val = (s.strip() for s in item.split("=", 1))
            if key not in types and key not in ("name", "path", "queries"):
                raise DatasetError(f"unknown dataset option {key!r}")
            kw[key] = types.get(key, str)(val)
        if head not in ("uniform", "gaussian_clusters", "file"):
            # a bare path
            return cls(kind="file", path=head, **kw)
        return cls(kind=head, **kw)

    def load(self, n_queries: int) -> tuple[VectorDataset, np.ndarray]:
        if self.kind == "file":
            data = load_vectors(self.path, name=self.name)
            if self.queries:
                qs = load_vectors(self.queries).vectors.astype(np.float64)
                if qs.shape[1] != data.dim:
                    raise DatasetError(f"{self.queries}: query dim {qs.shape[1]} != {data.dim}")
                return data, qs[:n_queries]
            return split_queries(data, n_queries)
        full = generate_synthetic(
            self.kind,
            self.n + n_queries,
            self.dim,
            seed=self.seed,
            clusters=self.clusters,
            spread=self.spread,
            name=self.name,
        )
        return split_queries(full, n_queries)


def uniform_spec(n: int = 20000, dim: int = 32, seed: int = 1) -> DatasetSpec:
    return DatasetSpec("uniform", n=n, dim=dim, seed=seed)


def clustered_spec(n: int = 20000, dim: int = 32, seed: int = 1, spread: float = 0.3) -> DatasetSpec:
    return DatasetSpec("gaussian_clusters", n=n, dim=dim, clusters=100, spread=spread, seed=seed)


def ladder_specs(n: int = 20000, dim: int = 32, seed: int = 1) -> list[DatasetSpec]:
    specs = [clustered_spec(n, dim, seed, s) for s in CC_LADDER_SPREADS]
    return specs + [uniform_spec(n, dim, seed)]


@dataclass
class ExperimentConfig:
    datasets: list[DatasetSpec]
    K_list: list[int] = field(default_factory=lambda: [20])
    strategies: list[str] = field(default_factory=lambda: ["undirected"])
    mod_cap: Optional[int] = DEFAULT_MOD_CAP
    n_queries: int = 100
    k: int = 20
    L: int = 20
    seed: int = 0
    out_dir: Optional[str] = None
    threads: int = 1

    def __post_init__(self):
        self.strategies = [EdgeStrategy(s).value for s in self.strategies]
        if not self.datasets:
            raise ValueError("config lists no datasets")
        if self.L < self.k:
            raise ValueError(f"L={self.L} must be >= k={self.k}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("out_dir")
        d.pop("threads")
        return d

    def digest(self) -> str:
        return _digest(self.to_dict())


def _digest(obj: dict) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class CellResult:
    dataset: str
    K: int
    strategy: str
    cc: float
    rows: list[dict]

    def mean(self, key: str) -> float:
        return fmean(float(r[key]) for r in self.rows)

    def summary(self) -> dict:
        return {
            "dataset": self.dataset,
            "K": self.K,
            "strategy": self.strategy,
            "cc": self.cc,
            "mean_recall": self.mean("recall"),
            "mean_hops": self.mean("hops"),
            "mean_hops_p1": self.mean("hops_p1"),
            "mean_hops_p2": self.mean("hops_p2"),
            "mean_scc1": self.mean("scc1"),
            "mean_scc2": self.mean("scc2"),
            "mean_scc3": self.mean("scc3"),
            "mean_scc1_ratio": self.mean("scc1_ratio"),
            "entry_probability": self.mean("entered"),
            "queries": len(self.rows),
        }


@dataclass
class ExperimentReport:
    cells: list[CellResult]
    correlations: dict = field(default_factory=dict)
    config_hash: str = ""

    def cell(self, dataset: str, K: int, strategy: str) -> CellResult:
        for c in self.cells:
            if (c.dataset, c.K, c.strategy) == (dataset, K, strategy):
                return c
        raise KeyError((dataset, K, strategy))

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "metadata": METADATA,
            "cells": [c.summary() for c in self.cells],
            "correlations": self.correlations,
        }


# ------------------------------------------------------------------ plumbing

class _Writer:
    def __init__(self, out_dir: Optional[str], table: str, config: dict):
        self.config = config
        self.table = table
        self.out = Path(out_dir) if out_dir else None
        self.artifacts: list[str] = []
        if self.out:
            self.out.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header: list[str], rows: list[dict]) -> None:
        if not self.out:
            return
        with open(self.out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(r[h]) for h in header])
        self.artifacts.append(name)

    def json(self, name: str, obj) -> None:
        if not self.out:
            return
        (self.out / name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        self.artifacts.append(name)

    def manifest(self) -> None:
        if not self.out:
            return
        entries = []
        for name in sorted(set(self.artifacts)):
            digest = hashlib.sha256((self.out / name).read_bytes()).hexdigest()
            entries.append({"file": name, "sha256": digest})
        doc = {
            "table": self.table,
            "config": self.config,
            "config_hash": _digest(self.config),
            "metadata": METADATA,
            "artifacts": entries,
        }
        (self.out / f"manifest-{self.table}.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n"
        )


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _cell_name(prefix: str, dataset: str, K: int, strategy: str) -> str:
    return f"{prefix}__{dataset}__K{K}__{strategy}.csv"


def _load_all(config: ExperimentConfig):
    loaded = []
    for spec in config.datasets:
        try:
            base, queries = spec.load(config.n_queries)
        except (OSError, DatasetError) as exc:
            raise DatasetError(f"dataset {spec.name}: {exc}") from exc
        if max(config.K_list) > base.n - 1:
            raise ValueError(f"dataset {spec.name}: K={max(config.K_list)} exceeds n-1={base.n - 1}")
        loaded.append((spec, base, queries))
    return loaded


def evaluate_cells(config: ExperimentConfig, need_queries: bool = True) -> list[CellResult]:
    """Build every (dataset, K, strategy) graph and, unless ``need_queries`` is
    False, search and analyze every held-out query. Writes nothing."""
    cells = []
    kmax = max(config.K_list)
    for spec, base, queries in _load_all(config):
        log.info("dataset %s: n=%d dim=%d", spec.name, base.n, base.dim)
        table = knn_table(base, base.vectors, kmax, exclude=np.arange(base.n))
        truth = knn_table(base, queries, config.k) if need_queries and len(queries) else None
        for K in sorted(config.K_list):
            for strategy in config.strategies:
                try:
                    g = build_graph(base, K, strategy, config.mod_cap, knn=table)
                except ValueError as exc:
                    raise ValueError(f"build {spec.name} K={K} {strategy}: {exc}") from exc
                cc = clustering_report(g).global_cc
                rows = _query_rows(config, base, queries, truth, g) if truth is not None else []
                cells.append(CellResult(spec.name, K, strategy, cc, rows))
                log.info("  K=%d %s cc=%.5f", K, strategy, cc)
    return cells


def _query_rows(config, base, queries, truth, g) -> list[dict]:
    params = SearchParams(k=config.k, L=config.L, seed=config.seed)
    traces = batch_search(g, base, queries, params, threads=config.threads)
    rows = []
    for i, tr in enumerate(traces):
        nl = NeighborList(truth[0][i], truth[1][i])
        sub = neighborhood_subgraph(g, base, queries[i], config.k, nl)
        scc = scc_decompose(sub, query_index=i)
        ps = phase_split(tr, scc, nl)
        top = scc.top(3)
        rows.append(
            {
                "query_id": i,
                "entry": tr.entry_vertex,
                "recall": recall(tr.result, nl),
                "hops": tr.hop_count,
                "hops_p1": ps.hops_phase1,
                "hops_p2": ps.hops_phase2,
                "core_size": ps.core_size,
                "fraction_visited": ps.scc_fraction_visited,
                "extra_true_nn": ps.extra_true_nn,
                "entered": ps.entered,
                "premise": premise_holds(g, base, queries[i], scc.max_component),
                "scc1": top[0],
                "scc2": top[1],
                "scc3": top[2],
                "scc1_ratio": top[0] / config.k,
                "scc2_ratio": top[1] / config.k,
                "scc3_ratio": top[2] / config.k,
            }
        )
    return rows


# -------------------------------------------------------------------- runners

def run_cc_vs_k(config: ExperimentConfig) -> list[dict]:
    cells = evaluate_cells(config, need_queries=False)
    rows = [
        {"dataset": c.dataset, "K": c.K, "strategy": c.strategy, "mod_cap": _cap(config), "cc": c.cc}
        for c in cells
    ]
    rows.sort(key=lambda r: (r["dataset"], r["K"], r["strategy"]))
    w = _Writer(config.out_dir, "cc-vs-k", config.to_dict())
    w.csv("cc_vs_k.csv", ["dataset", "K", "strategy", "mod_cap", "cc"], rows)
    w.manifest()
    return rows


def _cap(config) -> str:
    return "none" if config.mod_cap is None else str(config.mod_cap)


_QUERY_COLS = [
    "query_id", "entry", "recall", "hops", "hops_p1", "hops_p2", "core_size",
    "fraction_visited", "extra_true_nn", "entered", "premise",
    "scc1", "scc2", "scc3", "scc1_ratio", "scc2_ratio", "scc3_ratio",
]
_SUMMARY_COLS = [
    "dataset", "K", "strategy", "cc", "mean_recall", "mean_hops", "mean_hops_p1",
    "mean_hops_p2", "mean_scc1", "mean_scc2", "mean_scc3", "mean_scc1_ratio",
    "entry_probability", "queries",
]


def run_cc_vs_recall(config: ExperimentConfig) -> ExperimentReport:
    if len(config.datasets) < 2:
        raise AnalysisError("correlation needs at least two datasets")
    cells = evaluate_cells(config)
    report = ExperimentReport(cells, config_hash=config.digest())
    for K in sorted(config.K_list):
        for strategy in config.strategies:
            group = [c for c in cells if c.K == K and c.strategy == strategy]
            xs = [c.cc for c in group]
            ys = [c.mean("recall") for c in group]
            try:
                r = pearson(xs, ys)
            except AnalysisError as exc:
                # e.g. every dataset at recall 1.0; keep the per-cell tables
                log.warning("K=%d %s: %s", K, strategy, exc)
                r = None
            report.correlations[f"K{K}__{strategy}"] = r
    w = _Writer(config.out_dir, "cc-vs-recall", config.to_dict())
    for c in cells:
        w.csv(_cell_name("queries", c.dataset, c.K, c.strategy), _QUERY_COLS, c.rows)
    w.csv("cc_vs_recall.csv", _SUMMARY_COLS, [c.summary() for c in cells])
    w.json("cc_vs_recall.json", report.to_dict())
    w.manifest()
    return report


def run_scc_tables(config: ExperimentConfig) -> list[dict]:
    """Mean sizes and ratios of the three largest SCCs, one block per cell."""
    cells = evaluate_cells(config)
    w = _Writer(config.out_dir, "scc", config.to_dict())
    out = []
    for c in cells:
        block = []
        for j in (1, 2, 3):
            block.append(
                {
                    "dataset": c.dataset,
                    "K": c.K,
                    "strategy": c.strategy,
                    "scc_id": f"SCC{j}",
                    "size": c.mean(f"scc{j}"),
                    "ratio": c.mean(f"scc{j}_ratio"),
                }
            )
        w.csv(_cell_name("queries", c.dataset, c.K, c.strategy), _QUERY_COLS, c.rows)
        w.csv(_cell_name("scc", c.dataset, c.K, c.strategy), ["scc_id", "size", "ratio"], block)
        out.extend(block)
    w.csv("scc_tables.csv", ["dataset", "K", "strategy", "scc_id", "size", "ratio"], out)
    w.manifest()
    return out


_PHASE_COLS = [
    "query_id", "hops_p1", "hops_p2", "core_size", "fraction_visited",
    "extra_true_nn", "entered", "premise",
]


def run_two_phase(config: ExperimentConfig) -> dict[str, list[dict]]:
    """Per-query phase rows; the last row of each table holds the means."""
    cells = evaluate_cells(config)
    w = _Writer(config.out_dir, "two-phase", config.to_dict())
    tables = {}
    for c in cells:
        rows = [{k: r[k] for k in _PHASE_COLS} for r in c.rows]
        agg = {"query_id": "mean"}
        for col in _PHASE_COLS[1:]:
            agg[col] = fmean(float(r[col]) for r in rows)
        key = _cell_name("two_phase", c.dataset, c.K, c.strategy)
        w.csv(key, _PHASE_COLS, rows + [agg])
        tables[key] = rows + [agg]
    w.manifest()
    return tables


def run_theorem1(n_trials: int = 200, seed: int = 0, out_dir: Optional[str] = None) -> dict:
    report = verify_theorem1(n_trials=n_trials, seed=seed)
    rows = [
        {
            "trial": t.trial,
            "mode": t.mode,
            "n": t.n,
            "dim": t.dim,
            "k": t.k,
            "core_size": t.core_size,
            "attempts": t.attempts,
            "premise": t.premise,
            "passed": t.passed,
            "missing": json.dumps(t.missing, sort_keys=True),
        }
        for t in report.trials
    ]
    w = _Writer(out_dir, "theorem1", {"n_trials": n_trials, "seed": seed})
    w.csv("theorem1.csv", list(rows[0]) if rows else ["trial"], rows)
    w.manifest()
    return {"trials": len(rows), "passed": report.n_passed,
            "counterexamples": [asdict(t) for t in report.counterexamples()]}
