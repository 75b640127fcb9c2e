"""Best-first beam search with backtracking, fully traced.

The loop keeps a min-queue of candidates and a bounded queue of the L best
vertices seen so far. It stops once the nearest candidate is strictly
farther than the worst of a full result queue. A ``seen`` set (pushed or
expanded) ensures each vertex is enqueued at most once.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _backend
from .dataset import NeighborList, VectorDataset, _as_query
from .graph import KnnGraph

__all__ = [
    "SearchError",
    "SearchParams",
    "SearchTrace",
    "search",
    "batch_search",
    "write_traces_jsonl",
    "read_traces_jsonl",
    "default_threads",
]


class SearchError(ValueError):
    pass


@dataclass(frozen=True)
class SearchParams:
    """``k`` results from a beam of width ``L`` (defaults to k).

    ``entry`` fixes the start vertex; when it is None the start is drawn
    uniformly from a generator seeded with ``(seed, query_index)``.
    """

    k: int
    L: Optional[int] = None
    entry: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.L is None:
            object.__setattr__(self, "L", self.k)
        if self.k < 1:
            raise SearchError(f"k must be >= 1, got {self.k}")
        if self.L < self.k:
            raise SearchError(f"L={self.L} must be >= k={self.k}")

    def entry_for(self, n: int, query_index: int = 0) -> int:
        if self.entry is not None:
            if not 0 <= self.entry < n:
                raise SearchError(f"entry vertex {self.entry} out of range [0, {n})")
            return int(self.entry)
        return int(np.random.default_rng([self.seed, query_index]).integers(n))


@dataclass(frozen=True, eq=False)
class SearchTrace:
    entry_vertex: int
    pop_ids: np.ndarray
    pop_distances: np.ndarray
    push_ptr: np.ndarray
    push_ids: np.ndarray
    push_distances: np.ndarray
    result: NeighborList
    L: int

    @property
    def hop_count(self) -> int:
        return int(self.pop_ids.size)

    @property
    def pop_sequence(self) -> list[tuple[int, float]]:
        return [(int(i), float(d)) for i, d in zip(self.pop_ids, self.pop_distances)]

    @property
    def pushes(self) -> list[list[tuple[int, float]]]:
        """Newly enqueued neighbors, one list per pop."""
        out = []
        for a, b in zip(self.push_ptr[:-1], self.push_ptr[1:]):
            out.append(
                [(int(i), float(d)) for i, d in zip(self.push_ids[a:b], self.push_distances[a:b])]
            )
        return out

    def to_dict(self) -> dict:
        return {
            "entry": self.entry_vertex,
            "hops": self.hop_count,
            "pops": [[i, d] for i, d in self.pop_sequence],
            "result": self.result.ids.tolist(),
            "result_distances": self.result.distances.tolist(),
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, SearchTrace):
            return NotImplemented
        return self.entry_vertex == other.entry_vertex and all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("pop_ids", "pop_distances", "push_ptr", "push_ids", "push_distances")
        ) and np.array_equal(self.result.ids, other.result.ids) and np.array_equal(
            self.result.distances, other.result.distances
        )

    __hash__ = None


def _check(g: KnnGraph, data: VectorDataset) -> None:
    if g.n == 0:
        raise SearchError("empty graph")
    if g.n != data.n:
        raise SearchError(f"graph has {g.n} vertices but dataset has {data.n}")


def search(
    g: KnnGraph,
    data: VectorDataset,
    q,
    params: SearchParams,
    query_index: int = 0,
    kernels=None,
) -> SearchTrace:
    _check(g, data)
    q = _as_query(q, data.dim)
    if params.L > data.n:
        raise SearchError(f"L={params.L} exceeds dataset size {data.n}")
    entry = params.entry_for(data.n, query_index)
    kern = kernels or _backend.kernels
    pop_i, pop_d, ptr, push_i, push_d, res_i, res_d = kern.beam_search(
        g.indptr, g.indices, data.vectors, np.ascontiguousarray(q), entry, params.L
    )
    return SearchTrace(
        entry_vertex=entry,
        pop_ids=pop_i,
        pop_distances=pop_d,
        push_ptr=ptr,
        push_ids=push_i,
        push_distances=push_d,
        result=NeighborList(res_i[: params.k], res_d[: params.k]),
        L=params.L,
    )


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("ANNSCOPE_THREADS", "1")))
    except ValueError:
        return 1


def batch_search(
    g: KnnGraph,
    data: VectorDataset,
    queries: Sequence,
    params: SearchParams,
    threads: Optional[int] = None,
) -> list[SearchTrace]:
    """One trace per query, in query order; query i uses entry stream i."""
    _check(g, data)
    if not isinstance(queries, np.ndarray):
        queries = list(queries)

    def one(i: int) -> SearchTrace:
        try:
            return search(g, data, queries[i], params, query_index=i)
        except ValueError as exc:
            raise SearchError(f"query {i}: {exc}") from exc

    threads = threads or default_threads()
    if threads <= 1 or len(queries) < 2:
        return [one(i) for i in range(len(queries))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(len(queries))))


def write_traces_jsonl(traces: Iterable[SearchTrace], path) -> None:
    with open(path, "w") as fh:
        for t in traces:
            fh.write(json.dumps(t.to_dict(), separators=(",", ":")) + "\n")


def read_traces_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
