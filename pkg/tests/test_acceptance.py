"""Acceptance criteria, one test each, at full desk scale (20k x 32d).

Every test appends a PASS/FAIL line to the terminal summary and then asserts.
The runtime bound is part of each criterion.
"""
import time

import numpy as np
import pytest
from scipy.sparse.csgraph import connected_components

from annscope.analysis import (
    NeighborhoodSubgraph,
    clustering_report,
    scc_decompose,
    verify_theorem1,
)
from annscope.cli import main as cli_main
from annscope.dataset import NeighborList, VectorDataset, brute_force_knn, generate_synthetic
from annscope.graph import build_graph, graph_from_edges
from annscope.harness import (
    ExperimentConfig,
    clustered_spec,
    evaluate_cells,
    ladder_specs,
    run_cc_vs_k,
    run_cc_vs_recall,
    uniform_spec,
)
from annscope.search import SearchParams, search

from conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.slow


def report(num, title, ok, detail, elapsed, limit=None):
    within = limit is None or elapsed < limit
    bound = f" (limit {limit:g} s)" if limit is not None else ""
    status = "PASS" if ok and within else "FAIL"
    line = f"criterion {num:>2} {status}: {title}; {detail}; {elapsed:.1f} s{bound}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
    assert within, line


def harness_config(datasets, **kw):
    opts = dict(K_list=[20], strategies=["undirected"], mod_cap=70, n_queries=100, k=20, L=20, seed=0)
    opts.update(kw)
    return ExperimentConfig(datasets=datasets, **opts)


# --------------------------------------------------------------------------- 1

def closure_partition(n, edges):
    reach = np.eye(n, dtype=bool)
    for u, w in edges:
        reach[u, w] = True
    for m in range(n):
        reach |= reach[:, m:m + 1] & reach[m:m + 1, :]
    mutual = reach & reach.T
    return sorted({tuple(np.nonzero(mutual[v])[0].tolist()) for v in range(n)},
                  key=lambda c: (-len(c), c[0]))


def test_criterion_01_scc_matches_closure_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    agree = 0
    for trial in range(1000):
        n = int(rng.integers(1, 65))
        p = (0.05, 0.15, 0.4)[trial % 3]
        mask = rng.random((n, n)) < p
        np.fill_diagonal(mask, False)
        edges = [tuple(e) for e in np.argwhere(mask).tolist()]
        sub = NeighborhoodSubgraph(NeighborList(np.arange(n), np.zeros(n)), edges, n)
        got = [tuple(c) for c in scc_decompose(sub).components]
        agree += got == closure_partition(n, edges)
    report(1, "SCC partition equals transitive-closure oracle", agree == 1000,
           f"{agree}/1000 digraphs agree", time.perf_counter() - t0, 10)


# --------------------------------------------------------------------------- 2

def test_criterion_02_theorem1_planted_instances():
    t0 = time.perf_counter()
    rep = verify_theorem1(n_trials=200, seed=0)
    premise = sum(t.premise for t in rep.trials)
    detail = f"{rep.n_passed}/200 pass, premise held in {premise}/200"
    if rep.counterexamples():
        detail += f", first counterexample {rep.counterexamples()[0]}"
    report(2, "core fully expanded from every core entry with L=k", rep.n_passed == 200,
           detail, time.perf_counter() - t0, 30)


# --------------------------------------------------------------------------- 3

def test_criterion_03_exact_at_saturation():
    t0 = time.perf_counter()
    full = generate_synthetic("uniform", 2100, 32, seed=3)
    data = VectorDataset(full.vectors[:2000])
    queries = full.as_float64()[2000:]
    g = build_graph(data, K=20, strategy="undirected", mod_cap=70)
    strong = connected_components(g.to_sparse(), connection="strong")[0] == 1
    exact = 0
    for i, q in enumerate(queries):
        t = search(g, data, q, SearchParams(k=20, L=2000, seed=0), query_index=i)
        truth = brute_force_knn(data, q, 20)
        exact += (np.array_equal(t.result.ids, truth.ids)
                  and np.array_equal(t.result.distances, truth.distances))
    report(3, "L=n search on strongly connected graph is exact", strong and exact == 100,
           f"strongly connected={strong}, {exact}/100 exact", time.perf_counter() - t0, 60)


# --------------------------------------------------------------------------- 4

def test_criterion_04_clustering_fixtures():
    t0 = time.perf_counter()
    star4 = graph_from_edges(5, [(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (3, 4)])
    c_i = float(clustering_report(star4).per_vertex[0])
    k5 = graph_from_edges(5, [(a, b) for a in range(5) for b in range(5)])
    matching = graph_from_edges(6, [(0, 1), (2, 3), (4, 5)])
    cc_k5 = clustering_report(k5).global_cc
    cc_m = clustering_report(matching).global_cc
    ok = c_i == 1 / 3 and cc_k5 == 1.0 and cc_m == 0.0
    report(4, "clustering coefficient fixtures", ok,
           f"C_i={c_i!r}, complete={cc_k5!r}, matching={cc_m!r}", time.perf_counter() - t0)


# --------------------------------------------------------------------------- 5

def test_criterion_05_cc_grows_with_K(tmp_path):
    t0 = time.perf_counter()
    uni, clu = uniform_spec(), clustered_spec()
    cfg = harness_config([uni, clu], K_list=[10, 20, 50], strategies=["directed"], mod_cap=None,
                         out_dir=str(tmp_path))
    rows = run_cc_vs_k(cfg)
    cc = {(r["dataset"], r["K"]): r["cc"] for r in rows}
    trend = {}
    for spec in (uni, clu):
        seq = [cc[(spec.name, K)] for K in (10, 20, 50)]
        trend[spec.kind] = all(a <= b for a, b in zip(seq, seq[1:]))
    magnitude = cc[(uni.name, 20)] < 0.01
    detail = ", ".join(
        f"{s.kind} K10/20/50=" + "/".join(f"{cc[(s.name, K)]:.4f}" for K in (10, 20, 50))
        for s in (uni, clu)
    )
    detail += f"; non-decreasing={trend}; uniform K=20 below 0.01: {magnitude}"
    report(5, "CC non-decreasing in K and uniform CC(K=20) < 0.01",
           all(trend.values()) and magnitude, detail, time.perf_counter() - t0, 300)


# --------------------------------------------------------------------------- 6

def test_criterion_06_cc_recall_correlation(tmp_path):
    t0 = time.perf_counter()
    cfg = harness_config(ladder_specs(), out_dir=str(tmp_path))
    rep = run_cc_vs_recall(cfg)
    r = rep.correlations["K20__undirected"]
    pts = ", ".join(f"{c.cc:.3f}:{c.mean('recall'):.3f}" for c in rep.cells)
    report(6, "Pearson(CC, recall) >= 0.7 over the spread ladder",
           r is not None and r >= 0.7 and len(rep.cells) >= 6,
           f"r={r if r is None else round(r, 4)} over {len(rep.cells)} datasets (cc:recall {pts})",
           time.perf_counter() - t0, 600)


# --------------------------------------------------------------------------- 7

def test_criterion_07_recall_tracks_scc1_ratio():
    t0 = time.perf_counter()
    (cell,) = evaluate_cells(harness_config([clustered_spec()]))
    rec, ratio = cell.mean("recall"), cell.mean("scc1_ratio")
    report(7, "clustered mean recall >= mean SCC1 ratio - 0.05", rec >= ratio - 0.05,
           f"recall={rec:.4f}, SCC1 ratio={ratio:.4f}", time.perf_counter() - t0, 120)


# --------------------------------------------------------------------------- 8

def test_criterion_08_two_phase_structure():
    t0 = time.perf_counter()
    clu, uni = evaluate_cells(harness_config([clustered_spec(), uniform_spec()]))
    covered = [r for r in clu.rows if r["entered"] and r["premise"]]
    full_visit = all(r["fraction_visited"] == 1.0 for r in covered)
    p1, p2 = clu.mean("hops_p1"), clu.mean("hops_p2")
    core = uni.mean("core_size")
    missed = sum(not r["entered"] for r in uni.rows)
    checks = {
        "full visit under premise": full_visit,
        "P1 < P2": p1 < p2,
        "uniform core <= 3": core <= 3,
        "some uniform query never enters": missed > 0,
    }
    detail = (
        f"clustered: {len(covered)} entered with premise, full visit={full_visit}, "
        f"P1={p1:.2f} P2={p2:.2f}; uniform: mean core={core:.2f}, not entered={missed}/100; "
        f"failing: {[k for k, v in checks.items() if not v] or 'none'}"
    )
    report(8, "two-phase structure", all(checks.values()), detail, time.perf_counter() - t0, 120)


# --------------------------------------------------------------------------- 9

def test_criterion_09_undirected_scc_at_least_directed():
    t0 = time.perf_counter()
    d, u = evaluate_cells(harness_config([uniform_spec()], strategies=["directed", "undirected"]))
    dm, um = d.mean("scc1_ratio"), u.mean("scc1_ratio")
    paired = sum(ru["scc1"] >= rd["scc1"] for rd, ru in zip(d.rows, u.rows))
    report(9, "undirected mean SCC1 ratio >= directed (paired)", um >= dm,
           f"directed={dm:.4f}, undirected={um:.4f}, undirected >= directed in {paired}/100 pairs",
           time.perf_counter() - t0)


# -------------------------------------------------------------------------- 10

def cli_pipeline(out):
    out.mkdir()
    steps = [
        ["generate", "--kind", "gaussian_clusters", "--n", "3000", "--dim", "16", "--clusters", "20",
         "--spread", "0.3", "--seed", "7", "--out", str(out / "base.fvecs")],
        ["generate", "--n", "50", "--dim", "16", "--seed", "8", "--out", str(out / "queries.csv")],
        ["build", "--input", str(out / "base.fvecs"), "--k", "15", "--strategy", "mrng",
         "--out", str(out / "graph.bin")],
        ["search", "--graph", str(out / "graph.bin"), "--input", str(out / "base.fvecs"),
         "--queries", str(out / "queries.csv"), "--k", "10", "--L", "30", "--seed", "2",
         "--out", str(out / "traces.jsonl")],
        ["search", "--graph", str(out / "graph.bin"), "--input", str(out / "base.fvecs"),
         "--queries", str(out / "queries.csv"), "--k", "10", "--seed", "2", "--threads", "4",
         "--format", "ivecs", "--out", str(out / "results.ivecs")],
    ]
    for table in ("cc-vs-k", "cc-vs-recall", "scc", "two-phase", "theorem1"):
        steps.append(["analyze", "--table", table, "--seed", "3", "--out-dir", str(out / table),
                      "--dataset", "uniform,n=2000,dim=16,seed=4",
                      "--dataset", "gaussian_clusters,n=2000,dim=16,clusters=20,spread=0.3,seed=4",
                      "--K", "10,20", "--strategy", "directed,undirected", "--n-queries", "30",
                      "--k", "10", "--trials", "20"])
    return [cli_main(s) for s in steps]


def test_criterion_10_cli_reruns_byte_identical(tmp_path):
    t0 = time.perf_counter()
    codes = cli_pipeline(tmp_path / "a") + cli_pipeline(tmp_path / "b")
    a = {p.relative_to(tmp_path / "a"): p for p in (tmp_path / "a").rglob("*") if p.is_file()}
    b = {p.relative_to(tmp_path / "b"): p for p in (tmp_path / "b").rglob("*") if p.is_file()}
    same = a.keys() == b.keys() and all(a[k].read_bytes() == b[k].read_bytes() for k in a)
    differing = sorted(str(k) for k in a.keys() & b.keys() if a[k].read_bytes() != b[k].read_bytes())
    report(10, "seeded CLI reruns produce byte-identical files", same and not any(codes),
           f"{len(a)} files compared, exit codes {sorted(set(codes))}, differing: {differing or 'none'}",
           time.perf_counter() - t0)
