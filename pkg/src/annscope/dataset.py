"""Vector storage, the canonical distance, file I/O and the exact kNN oracle.

Vectors are stored as float32 so that fvecs round trips are bit exact;
every distance is accumulated in float64, component by component, left to
right. All kNN orderings are by ``(distance, id)``.
"""
from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "DatasetError",
    "VectorDataset",
    "NeighborList",
    "distance",
    "distances_to",
    "brute_force_knn",
    "knn_table",
    "load_vectors",
    "write_vectors",
    "read_ivecs",
    "write_ivecs",
    "generate_synthetic",
    "split_queries",
]


class DatasetError(ValueError):
    """Malformed vectors, bad files or out-of-range parameters."""


@dataclass(frozen=True)
class VectorDataset:
    vectors: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        v = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DatasetError(f"expected a non-empty (n, dim) array, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise DatasetError("vectors contain NaN or Inf")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, VectorDataset):
            return NotImplemented
        return (
            self.vectors.shape == other.vectors.shape
            and self.vectors.tobytes() == other.vectors.tobytes()
        )

    __hash__ = None

    def as_float64(self) -> np.ndarray:
        return self.vectors.astype(np.float64)


@dataclass(frozen=True)
class NeighborList:
    """Neighbors sorted ascending by ``(distance, id)``."""

    ids: np.ndarray
    distances: np.ndarray
    query_id: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "ids", np.asarray(self.ids, dtype=np.int64))
        object.__setattr__(self, "distances", np.asarray(self.distances, dtype=np.float64))

    def __len__(self) -> int:
        return len(self.ids)

    def pairs(self) -> list[tuple[int, float]]:
        return [(int(i), float(d)) for i, d in zip(self.ids, self.distances)]

    def id_set(self) -> set[int]:
        return set(self.ids.tolist())


def _as_query(q, dim: int) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if q.shape[0] != dim:
        raise DatasetError(f"dimension mismatch: {q.shape[0]} != {dim}")
    if not np.isfinite(q).all():
        raise DatasetError("query contains NaN or Inf")
    return q


def distance(a, b) -> float:
    """Squared Euclidean distance, accumulated left to right in float64."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise DatasetError(f"dimension mismatch: {a.shape[0]} != {b.shape[0]}")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise DatasetError("non-finite component")
    acc = 0.0
    for x, y in zip(a.tolist(), b.tolist()):
        t = x - y
        acc += t * t
    return acc


def distances_to(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Canonical distances from each row of ``points`` to ``q``.

    Iterates over columns so every row sees the same operation order as
    :func:`distance`; the results are bit identical to it.
    """
    pts = np.asarray(points, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    acc = np.zeros(pts.shape[0], dtype=np.float64)
    for j in range(pts.shape[1]):
        t = pts[:, j] - q[j]
        acc += t * t
    return acc


def _pairwise_canonical(points: np.ndarray, queries: np.ndarray, cand: np.ndarray) -> np.ndarray:
    # cand: (m, c) ids into points; returns canonical distances (m, c)
    acc = np.zeros(cand.shape, dtype=np.float64)
    for j in range(points.shape[1]):
        t = points[cand, j] - queries[:, j, None]
        acc += t * t
    return acc


def knn_table(
    data: VectorDataset,
    queries: np.ndarray,
    k: int,
    exclude: Optional[np.ndarray] = None,
    block: int = 512,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact k nearest neighbors for many queries at once.

    ``exclude[i]`` (if given and >= 0) is removed from query i's candidates,
    which is how dataset members skip themselves.

    A float64 GEMM shortlists candidates; the shortlist is then re-ranked by
    canonical distance. The shortlist is provably a superset of the answer
    because it includes every point whose GEMM distance lies within the
    rounding bound of the k-th one.
    """
    pts = data.as_float64()
    qs = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    n, dim = pts.shape
    if qs.shape[1] != dim:
        raise DatasetError(f"dimension mismatch: {qs.shape[1]} != {dim}")
    avail = n - (1 if exclude is not None else 0)
    if not 1 <= k <= avail:
        raise DatasetError(f"k={k} out of range [1, {avail}]")
    m = qs.shape[0]
    out_ids = np.empty((m, k), dtype=np.int64)
    out_d = np.empty((m, k), dtype=np.float64)
    pnorm = np.einsum("ij,ij->i", pts, pts)
    pmax = float(pnorm.max())
    eps = np.finfo(np.float64).eps
    short = min(k + 8, avail)
    for lo in range(0, m, block):
        hi = min(lo + block, m)
        qb = qs[lo:hi]
        qnorm = np.einsum("ij,ij->i", qb, qb)
        approx = qnorm[:, None] + pnorm[None, :] - 2.0 * (qb @ pts.T)
        if exclude is not None:
            ex = np.asarray(exclude[lo:hi])
            rows = np.nonzero(ex >= 0)[0]
            approx[rows, ex[rows]] = np.inf
        tol = 8.0 * (dim + 4) * eps * (qnorm + pmax) + 1e-300
        if short < avail:
            part = np.argpartition(approx, short, axis=1)
            cand = part[:, :short]
            cvals = np.take_along_axis(approx, cand, axis=1)
            kth = np.partition(cvals, k - 1, axis=1)[:, k - 1]
            nxt = np.take_along_axis(approx, part[:, short:short + 1], axis=1)[:, 0]
            ok = nxt > kth + 2.0 * tol
        else:
            order = np.argsort(approx, axis=1, kind="stable")[:, :avail]
            cand = order
            ok = np.ones(hi - lo, dtype=bool)
        exact = _pairwise_canonical(pts, qb, cand)
        for r in range(hi - lo):
            if ok[r]:
                ids, ds = cand[r], exact[r]
            else:
                row = approx[r]
                kth_r = np.partition(row, k - 1)[k - 1]
                ids = np.nonzero(row <= kth_r + 2.0 * tol[r])[0]
                ds = distances_to(pts[ids], qb[r])
            order = np.lexsort((ids, ds))[:k]
            out_ids[lo + r] = ids[order]
            out_d[lo + r] = ds[order]
    return out_ids, out_d


def brute_force_knn(
    data: VectorDataset, q, k: int, exclude_id: Optional[int] = None
) -> NeighborList:
    """Exact k nearest neighbors of ``q``.

    ``q`` is either a vector or an ``int`` vertex id; querying by id excludes
    the vertex itself from its own list.
    """
    if isinstance(q, (int, np.integer)):
        qid = int(q)
        if not 0 <= qid < data.n:
            raise DatasetError(f"vertex id {qid} out of range")
        vec = data.vectors[qid].astype(np.float64)
        exclude_id = qid
    else:
        qid = None
        vec = _as_query(q, data.dim)
    ex = None if exclude_id is None else np.array([exclude_id])
    ids, ds = knn_table(data, vec[None, :], k, exclude=ex)
    return NeighborList(ids[0], ds[0], query_id=qid)


def split_queries(data: VectorDataset, n_queries: int) -> tuple[VectorDataset, np.ndarray]:
    """Hold out the last ``n_queries`` rows as out-of-sample queries."""
    if not 0 <= n_queries < data.n:
        raise DatasetError(f"cannot hold out {n_queries} of {data.n} vectors")
    base = VectorDataset(data.vectors[: data.n - n_queries], name=data.name)
    return base, data.vectors[data.n - n_queries:].astype(np.float64)


# --------------------------------------------------------------------- files

def _read_xvecs(path: Path, dtype: str) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw:
        raise DatasetError(f"{path}: empty file")
    rows = []
    off = 0
    dim = None
    while off < len(raw):
        if off + 4 > len(raw):
            raise DatasetError(f"{path}: truncated dimension header at byte {off}")
        (d,) = struct.unpack_from("<i", raw, off)
        if d <= 0:
            raise DatasetError(f"{path}: invalid dimension {d} at byte {off}")
        if dim is None:
            dim = d
        elif d != dim:
            raise DatasetError(f"{path}: inconsistent dimension {d} != {dim} at byte {off}")
        end = off + 4 + 4 * d
        if end > len(raw):
            raise DatasetError(f"{path}: truncated record at byte {off}")
        rows.append(np.frombuffer(raw, dtype=dtype, count=d, offset=off + 4))
        off = end
    return np.vstack(rows)


def _write_xvecs(path: Path, arr: np.ndarray, dtype: str) -> None:
    arr = np.ascontiguousarray(arr, dtype=dtype)
    n, d = arr.shape
    rec = np.empty((n, d + 1), dtype=dtype)
    rec[:, 1:] = arr
    rec.view("<i4")[:, 0] = d
    Path(path).write_bytes(rec.tobytes())


def _read_csv(path: Path) -> np.ndarray:
    text = Path(path).read_bytes().decode("utf-8")
    rows = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text, newline="")), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            rows.append([float(c) for c in row])
        except ValueError as exc:
            raise DatasetError(f"{path}: line {lineno}: {exc}") from None
        if len(rows[-1]) != len(rows[0]):
            raise DatasetError(
                f"{path}: line {lineno}: {len(rows[-1])} values, expected {len(rows[0])}"
            )
    if not rows:
        raise DatasetError(f"{path}: no vectors")
    return np.asarray(rows, dtype=np.float64)


def _fmt_from_path(path: Path, fmt: Optional[str]) -> str:
    fmt = fmt or Path(path).suffix.lstrip(".").lower()
    if fmt not in ("fvecs", "csv"):
        raise DatasetError(f"unsupported vector format {fmt!r} (use fvecs or csv)")
    return fmt


def load_vectors(path, fmt: Optional[str] = None, name: Optional[str] = None) -> VectorDataset:
    path = Path(path)
    fmt = _fmt_from_path(path, fmt)
    arr = _read_xvecs(path, "<f4") if fmt == "fvecs" else _read_csv(path)
    if fmt == "csv":
        arr32 = arr.astype(np.float32)
        if not np.isfinite(arr32).all():
            raise DatasetError(f"{path}: value overflows float32")
        arr = arr32
    return VectorDataset(arr, name=name or path.stem)


def write_vectors(data: VectorDataset, path, fmt: Optional[str] = None) -> None:
    path = Path(path)
    fmt = _fmt_from_path(path, fmt)
    if fmt == "fvecs":
        _write_xvecs(path, data.vectors, "<f4")
    else:
        # repr of a float32 widened to float64 parses back to the same float32
        with open(path, "w", newline="") as fh:
            for row in data.vectors.astype(np.float64):
                fh.write(",".join(repr(float(x)) for x in row) + "\n")


def read_ivecs(path) -> np.ndarray:
    return _read_xvecs(Path(path), "<i4").astype(np.int64)


def write_ivecs(path, ids: np.ndarray) -> None:
    _write_xvecs(Path(path), np.asarray(ids), "<i4")


# ----------------------------------------------------------------- synthetic

def generate_synthetic(
    kind: str,
    n: int,
    dim: int,
    seed: int,
    clusters: int = 1,
    spread: float = 0.05,
    name: Optional[str] = None,
) -> VectorDataset:
    """Seeded synthetic vectors.

    ``uniform`` draws every component from [0, 1); ``gaussian_clusters``
    draws ``clusters`` centers in the unit cube and scatters points around
    uniformly chosen centers with isotropic standard deviation ``spread``.
    """
    if n < 1 or dim < 1:
        raise DatasetError(f"n and dim must be >= 1 (got n={n}, dim={dim})")
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        x = rng.random((n, dim))
    elif kind == "gaussian_clusters":
        if clusters < 1:
            raise DatasetError("gaussian_clusters needs clusters >= 1")
        if not spread > 0:
            raise DatasetError("gaussian_clusters needs spread > 0")
        centers = rng.random((clusters, dim))
        which = rng.integers(0, clusters, size=n)
        x = centers[which] + spread * rng.standard_normal((n, dim))
    else:
        raise DatasetError(f"unknown synthetic kind {kind!r}")
    return VectorDataset(x.astype(np.float32), name=name or kind)


def permute(data: VectorDataset, perm: Sequence[int]) -> VectorDataset:
    return VectorDataset(data.vectors[np.asarray(perm)], name=data.name)
