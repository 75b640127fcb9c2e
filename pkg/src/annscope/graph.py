"""KNN-graph construction with pluggable edge selection, plus a binary format.

Every vertex gets its exact K nearest neighbors; an :class:`EdgeStrategy`
picks the subset that becomes out-edges. ``UNDIRECTED`` then mirrors every
edge, and an optional out-degree cap keeps the nearest neighbors of each list.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import sparse

from .dataset import NeighborList, VectorDataset, knn_table

__all__ = [
    "GraphError",
    "EdgeStrategy",
    "KnnGraph",
    "build_graph",
    "rng_prune",
    "mrng_prune",
    "save_graph",
    "load_graph",
    "graph_from_edges",
    "DEFAULT_K",
    "DEFAULT_MOD_CAP",
]

DEFAULT_K = 50
DEFAULT_MOD_CAP = 70

MAGIC = b"KNNG"
VERSION = 1
_NO_CAP = 0xFFFFFFFF
_HEADER = struct.Struct("<4sHBxIII")


class GraphError(ValueError):
    pass


class EdgeStrategy(str, enum.Enum):
    DIRECTED = "directed"
    UNDIRECTED = "undirected"
    RNG = "rng"
    MRNG = "mrng"

    @property
    def tag(self) -> int:
        return _TAGS[self]

    @classmethod
    def from_tag(cls, tag: int) -> "EdgeStrategy":
        for s, t in _TAGS.items():
            if t == tag:
                return s
        raise GraphError(f"unknown strategy tag {tag}")


_TAGS = {
    EdgeStrategy.DIRECTED: 0,
    EdgeStrategy.UNDIRECTED: 1,
    EdgeStrategy.RNG: 2,
    EdgeStrategy.MRNG: 3,
}


@dataclass(frozen=True, eq=False)
class KnnGraph:
    """Directed graph in CSR form; each out-list is sorted by vertex id."""

    indptr: np.ndarray
    indices: np.ndarray
    strategy: EdgeStrategy = EdgeStrategy.DIRECTED
    K: int = 0
    mod_cap: Optional[int] = None

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int32)
        if indptr.ndim != 1 or indptr.size < 2 or indptr[0] != 0 or indptr[-1] != indices.size:
            raise GraphError("malformed CSR offsets")
        if np.any(np.diff(indptr) < 0):
            raise GraphError("malformed CSR offsets")
        indptr.setflags(write=False)
        indices.setflags(write=False)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "strategy", EdgeStrategy(self.strategy))

    @property
    def n(self) -> int:
        return self.indptr.size - 1

    @property
    def n_edges(self) -> int:
        return int(self.indices.size)

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def out_degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def adjacency(self) -> list[list[int]]:
        return [self.neighbors(v).tolist() for v in range(self.n)]

    def edges(self) -> np.ndarray:
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.out_degrees())
        return np.column_stack([src, self.indices.astype(np.int64)])

    def to_sparse(self) -> sparse.csr_matrix:
        data = np.ones(self.indices.size, dtype=np.int8)
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def symmetrized(self) -> "KnnGraph":
        """Undirected view: u-v is an edge iff u->v or v->u exists."""
        e = self.edges()
        both = np.vstack([e, e[:, ::-1]])
        return graph_from_edges(self.n, both, self.strategy, self.K, self.mod_cap)

    def validate(self) -> None:
        for v in range(self.n):
            nb = self.neighbors(v)
            if nb.size and (nb.min() < 0 or nb.max() >= self.n):
                raise GraphError(f"vertex {v}: neighbor id out of range")
            if np.any(nb == v):
                raise GraphError(f"vertex {v}: self-loop")
            if np.any(np.diff(nb) <= 0):
                raise GraphError(f"vertex {v}: out-list not strictly ascending")
            if self.mod_cap is not None and nb.size > self.mod_cap:
                raise GraphError(f"vertex {v}: out-degree {nb.size} exceeds cap {self.mod_cap}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, KnnGraph):
            return NotImplemented
        return (
            np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and self.strategy == other.strategy
            and self.K == other.K
            and self.mod_cap == other.mod_cap
        )

    __hash__ = None


def graph_from_edges(n, edges, strategy=EdgeStrategy.DIRECTED, K=0, mod_cap=None) -> KnnGraph:
    """CSR graph from an (m, 2) edge array; drops self-loops and duplicates."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= n):
        raise GraphError("edge endpoint out of range")
    e = e[e[:, 0] != e[:, 1]]
    key = np.unique(e[:, 0] * n + e[:, 1])
    src, dst = key // n, key % n
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return KnnGraph(np.cumsum(indptr), dst, strategy, K, mod_cap)


# -------------------------------------------------------------------- pruning

def _cand_pairwise(data: VectorDataset, ids: np.ndarray) -> np.ndarray:
    pts = data.vectors[ids].astype(np.float64)
    acc = np.zeros((len(ids), len(ids)), dtype=np.float64)
    for j in range(pts.shape[1]):
        t = pts[:, None, j] - pts[None, :, j]
        acc += t * t
    return acc


def _occluded(dv_u: float, du_r: float, dv_r: float) -> bool:
    # u lies in the open lune of (v, r); ties keep the edge
    return dv_u < dv_r and du_r < dv_r


def rng_prune(candidates: NeighborList, data: VectorDataset, v: int) -> NeighborList:
    """Keep r unless some candidate u sits in the open lune of (v, r)."""
    ids, dv = candidates.ids, candidates.distances
    pair = _cand_pairwise(data, ids)
    keep = []
    for r in range(len(ids)):
        blocked = any(
            _occluded(dv[u], pair[u, r], dv[r]) for u in range(len(ids)) if u != r
        )
        if not blocked:
            keep.append(r)
    return NeighborList(ids[keep], dv[keep], query_id=v)


def mrng_prune(candidates: NeighborList, data: VectorDataset, v: int) -> NeighborList:
    """Like :func:`rng_prune`, but only already-kept neighbors can occlude."""
    ids, dv = candidates.ids, candidates.distances
    pair = _cand_pairwise(data, ids)
    keep: list[int] = []
    for r in range(len(ids)):
        if not any(_occluded(dv[u], pair[u, r], dv[r]) for u in keep):
            keep.append(r)
    return NeighborList(ids[keep], dv[keep], query_id=v)


# ---------------------------------------------------------------- construction

def build_graph(
    data: VectorDataset,
    K: int = DEFAULT_K,
    strategy: EdgeStrategy | str = EdgeStrategy.DIRECTED,
    mod_cap: Optional[int] = None,
    knn: Optional[tuple[np.ndarray, np.ndarray]] = None,
) -> KnnGraph:
    """Build a search graph over ``data``.

    ``knn`` may pass a precomputed self-excluded neighbor table with at least
    K columns (from :func:`knn_table`); it is sliced, not recomputed, which
    lets one table serve several K.
    """
    strategy = EdgeStrategy(strategy)
    n = data.n
    if not 1 <= K <= n - 1:
        raise GraphError(f"K={K} out of range [1, {n - 1}]")
    if mod_cap is not None and mod_cap < 1:
        raise GraphError(f"mod_cap must be >= 1, got {mod_cap}")
    if knn is None:
        ids, ds = knn_table(data, data.vectors, K, exclude=np.arange(n))
    else:
        ids, ds = knn
        if ids.shape[0] != n or ids.shape[1] < K:
            raise GraphError("precomputed neighbor table too small")
        ids, ds = ids[:, :K], ds[:, :K]

    if strategy in (EdgeStrategy.DIRECTED, EdgeStrategy.UNDIRECTED):
        src = np.repeat(np.arange(n, dtype=np.int64), K)
        dst = ids.reshape(-1)
        dist = ds.reshape(-1)
    else:
        prune = rng_prune if strategy is EdgeStrategy.RNG else mrng_prune
        s_parts, d_parts, w_parts = [], [], []
        for v in range(n):
            kept = prune(NeighborList(ids[v], ds[v]), data, v)
            s_parts.append(np.full(len(kept), v, dtype=np.int64))
            d_parts.append(kept.ids)
            w_parts.append(kept.distances)
        src, dst, dist = (np.concatenate(p) for p in (s_parts, d_parts, w_parts))

    if strategy is EdgeStrategy.UNDIRECTED:
        # canonical distance is bitwise symmetric, so the mirrored weight is exact
        src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
        dist = np.concatenate([dist, dist])

    key = src * n + dst
    key, first = np.unique(key, return_index=True)
    src, dst, dist = key // n, key % n, dist[first]

    if mod_cap is not None:
        order = np.lexsort((dst, dist, src))
        src, dst, dist = src[order], dst[order], dist[order]
        starts = np.searchsorted(src, src, side="left")
        rank = np.arange(src.size) - starts
        keep = rank < mod_cap
        src, dst = src[keep], dst[keep]

    g = graph_from_edges(n, np.column_stack([src, dst]), strategy, K, mod_cap)
    return g


# ------------------------------------------------------------------ file I/O

def save_graph(g: KnnGraph, path) -> None:
    cap = _NO_CAP if g.mod_cap is None else g.mod_cap
    parts = [_HEADER.pack(MAGIC, VERSION, g.strategy.tag, g.n, g.K, cap)]
    deg = g.out_degrees()
    body = np.empty(g.n + g.n_edges, dtype="<u4")
    pos = np.arange(g.n) + g.indptr[:-1]
    body[pos] = deg
    mask = np.ones(body.size, dtype=bool)
    mask[pos] = False
    body[mask] = g.indices
    parts.append(body.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_graph(path) -> KnnGraph:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise GraphError(f"{path}: truncated header at byte {len(raw)}")
    magic, version, tag, n, K, cap = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise GraphError(f"{path}: bad magic {magic!r} at byte 0")
    if version != VERSION:
        raise GraphError(f"{path}: unsupported version {version} at byte 4")
    strategy = EdgeStrategy.from_tag(tag)
    body = raw[_HEADER.size:]
    if len(body) % 4:
        raise GraphError(f"{path}: truncated record at byte {_HEADER.size + len(body) - len(body) % 4}")
    words = np.frombuffer(body, dtype="<u4")
    if n > words.size:
        # every vertex needs at least its degree word
        raise GraphError(f"{path}: truncated, {n} vertices need more than byte {len(raw)}")
    indptr = np.zeros(n + 1, dtype=np.int64)
    chunks = []
    pos = 0
    for v in range(n):
        if pos >= words.size:
            raise GraphError(f"{path}: truncated at vertex {v}, byte {_HEADER.size + 4 * pos}")
        deg = int(words[pos])
        if pos + 1 + deg > words.size:
            raise GraphError(
                f"{path}: degree {deg} of vertex {v} overruns file at byte {_HEADER.size + 4 * pos}"
            )
        chunks.append(words[pos + 1:pos + 1 + deg])
        indptr[v + 1] = indptr[v] + deg
        pos += 1 + deg
    if pos != words.size:
        raise GraphError(f"{path}: trailing data at byte {_HEADER.size + 4 * pos}")
    indices = np.concatenate(chunks).astype(np.int64) if chunks else np.zeros(0, np.int64)
    if indices.size and indices.max() >= n:
        raise GraphError(f"{path}: neighbor id out of range")
    g = KnnGraph(indptr, indices, strategy, K, None if cap == _NO_CAP else cap)
    g.validate()
    return g
