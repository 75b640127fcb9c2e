"""Pure-Python kernels; the reference semantics for the compiled core."""
from __future__ import annotations

import heapq

import numpy as np
from scipy import sparse


def beam_search(indptr, indices, data, q, entry, L):
    n = data.shape[0]
    seen = np.zeros(n, dtype=bool)
    q = np.asarray(q, dtype=np.float64)
    entry = int(entry)
    d0 = float(_dists(data, np.array([entry]), q)[0])
    seen[entry] = True
    cand = [(d0, entry)]
    # max-heap over (dist, id) via negation
    res = [(-d0, -entry)]
    pop_ids, pop_d, push_ptr, push_ids, push_d = [], [], [0], [], []
    while cand:
        dv, v = heapq.heappop(cand)
        if len(res) >= L and dv > -res[0][0]:
            break
        pop_ids.append(v)
        pop_d.append(dv)
        nbrs = indices[indptr[v]:indptr[v + 1]]
        fresh = nbrs[~seen[nbrs]]
        if fresh.size:
            seen[fresh] = True
            ds = _dists(data, fresh, q)
            for e, de in zip(fresh.tolist(), ds.tolist()):
                heapq.heappush(cand, (de, e))
                if len(res) < L:
                    heapq.heappush(res, (-de, -e))
                elif (de, e) < (-res[0][0], -res[0][1]):
                    heapq.heapreplace(res, (-de, -e))
                push_ids.append(e)
                push_d.append(de)
        push_ptr.append(len(push_ids))
    res_sorted = sorted((-d, -i) for d, i in res)
    return (
        np.asarray(pop_ids, dtype=np.int64),
        np.asarray(pop_d, dtype=np.float64),
        np.asarray(push_ptr, dtype=np.int64),
        np.asarray(push_ids, dtype=np.int64),
        np.asarray(push_d, dtype=np.float64),
        np.asarray([i for _, i in res_sorted], dtype=np.int64),
        np.asarray([d for d, _ in res_sorted], dtype=np.float64),
    )


def _dists(data, ids, q):
    acc = np.zeros(len(ids), dtype=np.float64)
    rows = data[ids]
    for j in range(data.shape[1]):
        t = rows[:, j].astype(np.float64) - q[j]
        acc += t * t
    return acc


def neighbor_pair_counts(indptr, indices, block: int = 2048):
    n = len(indptr) - 1
    a = sparse.csr_matrix(
        (np.ones(len(indices), dtype=np.int64), indices, indptr), shape=(n, n)
    )
    out = np.zeros(n, dtype=np.int64)
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        rows = a[lo:hi]
        paths = (rows @ a).multiply(rows)
        out[lo:hi] = np.asarray(paths.sum(axis=1)).ravel() // 2
    return out
