"""Diagnostics for graph search: clustering, query-local SCCs, search phases.

The central object is the k-neighborhood subgraph of a query: the subgraph
induced by its k exact nearest neighbors. Its largest strongly connected
component is the query's *core*; a trace is split into the walk before the
first core vertex is expanded (phase 1) and everything after (phase 2).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _backend
from .dataset import NeighborList, VectorDataset, brute_force_knn, distances_to
from .graph import EdgeStrategy, KnnGraph, build_graph, graph_from_edges
from .search import SearchParams, SearchTrace, search

__all__ = [
    "AnalysisError",
    "ClusteringReport",
    "clustering_report",
    "local_clustering",
    "global_clustering",
    "NeighborhoodSubgraph",
    "neighborhood_subgraph",
    "strongly_connected_components",
    "SccReport",
    "scc_decompose",
    "PhaseStats",
    "phase_split",
    "recall",
    "premise_holds",
    "verify_theorem1",
    "Theorem1Report",
    "estimate_entry_probability",
    "pearson",
]


class AnalysisError(ValueError):
    pass


# ----------------------------------------------------------------- clustering

@dataclass(frozen=True)
class ClusteringReport:
    per_vertex: np.ndarray
    global_cc: float
    K: int
    strategy: str


def _local_from_counts(pairs: np.ndarray, deg: np.ndarray) -> np.ndarray:
    denom = deg * (deg - 1) / 2.0
    out = np.zeros(deg.shape, dtype=np.float64)
    ok = deg >= 2
    out[ok] = pairs[ok] / denom[ok]
    return out


def clustering_report(g: KnnGraph, kernels=None) -> ClusteringReport:
    """Local coefficients on the symmetrized graph and their mean.

    Vertices with fewer than two neighbors score 0 and still count in the
    mean.
    """
    sym = g.symmetrized()
    kern = kernels or _backend.kernels
    pairs = kern.neighbor_pair_counts(sym.indptr, sym.indices)
    per = _local_from_counts(pairs.astype(np.float64), sym.out_degrees().astype(np.float64))
    return ClusteringReport(per, float(per.mean()), g.K, g.strategy.value)


def local_clustering(g: KnnGraph, v: int) -> float:
    if not 0 <= v < g.n:
        raise AnalysisError(f"vertex {v} out of range")
    nbrs = set(g.neighbors(v).tolist())
    # in-neighbors complete the symmetrized neighborhood
    nbrs.update(np.nonzero(g.to_sparse()[:, v].toarray().ravel())[0].tolist())
    nbrs.discard(v)
    kv = len(nbrs)
    if kv < 2:
        return 0.0
    linked = 0
    for u in nbrs:
        out_u = set(g.neighbors(u).tolist())
        for w in nbrs:
            if u < w and (w in out_u or u in set(g.neighbors(w).tolist())):
                linked += 1
    return linked / (kv * (kv - 1) / 2)


def global_clustering(g: KnnGraph) -> float:
    return clustering_report(g).global_cc


# ------------------------------------------------------- neighborhood and SCC

@dataclass(frozen=True)
class NeighborhoodSubgraph:
    """Subgraph induced by the k nearest neighbors of a query.

    ``edges`` holds global vertex ids, directions preserved.
    """

    members: NeighborList
    edges: list[tuple[int, int]]
    n: int

    @property
    def k(self) -> int:
        return len(self.members)

    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {int(v): [] for v in self.members.ids}
        for u, w in self.edges:
            adj[u].append(w)
        return adj


def neighborhood_subgraph(
    g: KnnGraph,
    data: VectorDataset,
    q,
    k: int,
    truth: Optional[NeighborList] = None,
) -> NeighborhoodSubgraph:
    if g.n != data.n:
        raise AnalysisError("graph and dataset sizes differ")
    if truth is None:
        truth = brute_force_knn(data, q, k)
    members = truth.ids
    inside = np.zeros(g.n, dtype=bool)
    inside[members] = True
    edges = []
    for u in sorted(members.tolist()):
        nb = g.neighbors(u)
        for w in nb[inside[nb]].tolist():
            edges.append((u, w))
    return NeighborhoodSubgraph(truth, edges, g.n)


def strongly_connected_components(vertices: Sequence[int], adj: dict) -> list[list[int]]:
    """Tarjan's algorithm without recursion; returns unsorted components."""
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in vertices:
        if root in index:
            continue
        work = [(root, iter(adj.get(root, ())))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(adj.get(w, ()))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
    return comps


@dataclass(frozen=True)
class SccReport:
    """SCCs of a k-neighborhood subgraph, largest first (ties: smallest id)."""

    k: int
    components: list[list[int]]
    n: int = 0
    query_index: Optional[int] = None

    @property
    def max_component(self) -> list[int]:
        return self.components[0] if self.components else []

    @property
    def sizes(self) -> list[int]:
        return [len(c) for c in self.components]

    @property
    def ratios(self) -> list[float]:
        return [len(c) / self.k for c in self.components]

    def top(self, m: int = 3) -> list[int]:
        """Sizes of the m largest components, zero padded."""
        s = self.sizes[:m]
        return s + [0] * (m - len(s))


def scc_decompose(sub: NeighborhoodSubgraph, query_index: Optional[int] = None) -> SccReport:
    verts = sorted(sub.members.ids.tolist())
    comps = [sorted(c) for c in strongly_connected_components(verts, sub.adjacency())]
    comps.sort(key=lambda c: (-len(c), c[0]))
    return SccReport(sub.k, comps, sub.n, query_index)


# --------------------------------------------------------------------- phases

@dataclass(frozen=True)
class PhaseStats:
    hops_phase1: int
    hops_phase2: int
    core_size: int
    entered: bool
    scc_fraction_visited: float
    extra_true_nn: int

    @property
    def hop_count(self) -> int:
        return self.hops_phase1 + self.hops_phase2

    def as_dict(self) -> dict:
        return asdict(self)


def phase_split(trace: SearchTrace, scc: SccReport, truth: NeighborList) -> PhaseStats:
    """Split a trace at the first expansion of a core vertex."""
    pops = trace.pop_ids
    if scc.n:
        bad = [int(i) for i in np.concatenate([pops, trace.result.ids]) if not 0 <= i < scc.n]
        if bad:
            raise AnalysisError(f"trace references vertices outside the dataset: {bad[:5]}")
    if len(truth) != scc.k:
        raise AnalysisError(f"truth has {len(truth)} entries, SCC report k={scc.k}")
    core = set(scc.max_component)
    hits = [i for i, v in enumerate(pops.tolist()) if v in core]
    if not hits:
        return PhaseStats(trace.hop_count, 0, len(core), False, 0.0, 0)
    b = hits[0]
    after = pops[b:].tolist()
    outside_truth = truth.id_set() - core
    visited_core = core.intersection(pops.tolist())
    return PhaseStats(
        hops_phase1=b,
        hops_phase2=trace.hop_count - b,
        core_size=len(core),
        entered=True,
        scc_fraction_visited=len(visited_core) / len(core),
        extra_true_nn=len(outside_truth.intersection(after)),
    )


def recall(result: NeighborList, truth: NeighborList) -> float:
    k = len(truth)
    if k == 0:
        raise AnalysisError("empty ground truth")
    return len(result.id_set() & truth.id_set()) / k


def estimate_entry_probability(
    traces: Sequence[SearchTrace],
    sccs: Sequence[SccReport],
) -> float:
    """Share of traces that expand at least one core vertex."""
    if len(traces) != len(sccs):
        raise AnalysisError(f"{len(traces)} traces but {len(sccs)} SCC reports")
    if not traces:
        raise AnalysisError("no traces")
    entered = 0
    for t, s in zip(traces, sccs):
        core = set(s.max_component)
        entered += any(v in core for v in t.pop_ids.tolist())
    return entered / len(traces)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise AnalysisError("pearson needs two equal-length sequences")
    if x.size < 2:
        raise AnalysisError("pearson needs at least two points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise AnalysisError("correlation undefined for zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


# ------------------------------------------------------------ core traversal

def premise_holds(g: KnnGraph, data: VectorDataset, q, core: Sequence[int]) -> bool:
    """True if every vertex adjacent to the core but outside it (either edge
    direction) is strictly farther from q than every core vertex."""
    core = list(core)
    if not core:
        return False
    inside = np.zeros(g.n, dtype=bool)
    inside[core] = True
    out_nb = np.concatenate([g.neighbors(v) for v in core])
    in_nb = g.to_sparse().tocsc()[:, core].tocoo().row
    border = np.unique(np.concatenate([out_nb, in_nb]).astype(np.int64))
    border = border[~inside[border]]
    if border.size == 0:
        return True
    qv = np.asarray(q, dtype=np.float64)
    d_core = distances_to(data.vectors[core], qv).max()
    d_border = distances_to(data.vectors[border], qv).min()
    return bool(d_border > d_core)


@dataclass
class Theorem1Trial:
    trial: int
    mode: str
    n: int
    dim: int
    k: int
    core_size: int
    attempts: int
    premise: bool
    passed: bool
    missing: dict = field(default_factory=dict)


@dataclass
class Theorem1Report:
    trials: list[Theorem1Trial]

    @property
    def n_passed(self) -> int:
        return sum(t.passed for t in self.trials)

    @property
    def all_passed(self) -> bool:
        return all(t.passed for t in self.trials)

    def counterexamples(self) -> list[Theorem1Trial]:
        return [t for t in self.trials if not t.passed]


def _planted_cycle_instance(rng: np.random.Generator, spread: float):
    # explicit digraph: the k nearest points carry a random Hamiltonian cycle
    # plus chords; background edges are random and may touch the planted set
    dim = int(rng.integers(2, 9))
    k = int(rng.integers(1, 13))
    n_bg = int(rng.integers(20, 120))
    q = np.full(dim, 0.5)
    planted = q + spread * rng.standard_normal((k, dim))
    dirs = rng.standard_normal((n_bg, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    bg = q + dirs * (1.0 + rng.random((n_bg, 1)))
    pts = np.vstack([planted, bg]).astype(np.float32)
    n = pts.shape[0]
    perm = rng.permutation(n)
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)
    pts = pts[perm]
    pl = inv[:k]
    edges = []
    order = rng.permutation(k)
    for i in range(k):
        edges.append((pl[order[i]], pl[order[(i + 1) % k]]))
    for _ in range(int(rng.integers(0, 2 * k + 1))):
        a, b = rng.integers(0, k, size=2)
        edges.append((pl[a], pl[b]))
    for _ in range(3 * n):
        a, b = rng.integers(0, n, size=2)
        edges.append((a, b))
    g = graph_from_edges(n, np.array(edges), EdgeStrategy.DIRECTED, 0, None)
    return VectorDataset(pts, name="planted-cycle"), g, q, k


def _planted_build_instance(rng: np.random.Generator, spread: float):
    dim = int(rng.integers(2, 9))
    k = int(rng.integers(2, 16))
    s = int(rng.integers(1, k + 1))
    n_bg = int(rng.integers(60, 240))
    q = np.full(dim, 0.5)
    planted = q + spread * rng.standard_normal((s, dim))
    bg = rng.random((n_bg, dim))
    pts = np.vstack([planted, bg]).astype(np.float32)
    strategy = list(EdgeStrategy)[int(rng.integers(0, 4))]
    K = int(rng.integers(max(1, s - 1), max(2, s + 4)))
    K = min(K, pts.shape[0] - 1)
    data = VectorDataset(pts, name="planted-build")
    g = build_graph(data, K, strategy)
    return data, g, q, k


def verify_theorem1(
    n_trials: int = 200,
    seed: int = 0,
    max_attempts: int = 12,
) -> Theorem1Report:
    """Check on planted instances that a search entering the core expands all of it.

    Each trial plants points close to a query; if the core of the resulting
    instance violates the border premise the planting is redone tighter.
    Then a search with L = k starts from every core vertex in turn.
    """
    trials = []
    for t in range(n_trials):
        rng = np.random.default_rng([seed, t])
        mode = "cycle" if t % 2 == 0 else "build"
        make = _planted_cycle_instance if mode == "cycle" else _planted_build_instance
        spread = 0.05
        premise = False
        for attempt in range(1, max_attempts + 1):
            data, g, q, k = make(rng, spread)
            truth = brute_force_knn(data, q, k)
            scc = scc_decompose(neighborhood_subgraph(g, data, q, k, truth))
            core = scc.max_component
            if premise_holds(g, data, q, core):
                premise = True
                break
            spread /= 4.0
        missing = {}
        if premise:
            for entry in core:
                tr = search(g, data, q, SearchParams(k=k, L=k, entry=entry))
                lost = sorted(set(core) - set(tr.pop_ids.tolist()))
                if lost:
                    missing[int(entry)] = lost
        trials.append(
            Theorem1Trial(
                trial=t,
                mode=mode,
                n=data.n,
                dim=data.dim,
                k=k,
                core_size=len(core),
                attempts=attempt,
                premise=premise,
                passed=premise and not missing,
                missing=missing,
            )
        )
    return Theorem1Report(trials)
