# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: best-first beam search and neighbor-pair counting.

Semantics are pinned by ``_pykernels``; both must produce identical output.
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, calloc, free
from libc.stdint cimport int32_t, int64_t, uint8_t

cnp.import_array()


cdef inline bint _lt(double da, int64_t ia, double db, int64_t ib) noexcept nogil:
    return da < db or (da == db and ia < ib)


# Binary heap over parallel (dist, id) arrays; ``sign`` = 1 for a min-heap,
# -1 for a max-heap under (dist, id) order.
cdef struct Heap:
    double *d
    int64_t *i
    Py_ssize_t size


cdef inline bint _above(Heap *h, Py_ssize_t a, Py_ssize_t b, int sign) noexcept nogil:
    if sign > 0:
        return _lt(h.d[a], h.i[a], h.d[b], h.i[b])
    return _lt(h.d[b], h.i[b], h.d[a], h.i[a])


cdef inline void _swap(Heap *h, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    cdef double td = h.d[a]
    cdef int64_t ti = h.i[a]
    h.d[a] = h.d[b]
    h.i[a] = h.i[b]
    h.d[b] = td
    h.i[b] = ti


cdef void _sift_up(Heap *h, Py_ssize_t pos, int sign) noexcept nogil:
    cdef Py_ssize_t parent
    while pos > 0:
        parent = (pos - 1) >> 1
        if _above(h, pos, parent, sign):
            _swap(h, pos, parent)
            pos = parent
        else:
            break


cdef void _sift_down(Heap *h, Py_ssize_t pos, int sign) noexcept nogil:
    cdef Py_ssize_t child, best
    while True:
        child = 2 * pos + 1
        if child >= h.size:
            break
        best = child
        if child + 1 < h.size and _above(h, child + 1, child, sign):
            best = child + 1
        if _above(h, best, pos, sign):
            _swap(h, best, pos)
            pos = best
        else:
            break


cdef inline void _push(Heap *h, double d, int64_t i, int sign) noexcept nogil:
    h.d[h.size] = d
    h.i[h.size] = i
    h.size += 1
    _sift_up(h, h.size - 1, sign)


cdef inline void _pop(Heap *h, int sign) noexcept nogil:
    h.size -= 1
    if h.size > 0:
        h.d[0] = h.d[h.size]
        h.i[0] = h.i[h.size]
        _sift_down(h, 0, sign)


cdef inline double _dist(const float[:, ::1] data, Py_ssize_t v, const double[::1] q) noexcept nogil:
    cdef double acc = 0.0, t
    cdef Py_ssize_t j
    for j in range(data.shape[1]):
        t = <double>data[v, j] - q[j]
        acc += t * t
    return acc


def beam_search(const int64_t[::1] indptr, const int32_t[::1] indices,
                const float[:, ::1] data, const double[::1] q,
                Py_ssize_t entry, Py_ssize_t L):
    """Run one search; returns (pop_ids, pop_d, push_ptr, push_ids, push_d,
    res_ids, res_d) with the result queue sorted ascending by (dist, id)."""
    cdef Py_ssize_t n = data.shape[0]
    cdef uint8_t *seen = <uint8_t *> calloc(n, sizeof(uint8_t))
    cdef Heap cand, res
    cand.d = <double *> malloc(n * sizeof(double))
    cand.i = <int64_t *> malloc(n * sizeof(int64_t))
    cand.size = 0
    res.d = <double *> malloc((L + 1) * sizeof(double))
    res.i = <int64_t *> malloc((L + 1) * sizeof(int64_t))
    res.size = 0
    pop_ids = np.empty(n, dtype=np.int64)
    pop_d = np.empty(n, dtype=np.float64)
    push_ptr = np.zeros(n + 1, dtype=np.int64)
    push_ids = np.empty(n, dtype=np.int64)
    push_d = np.empty(n, dtype=np.float64)
    cdef int64_t[::1] pi = pop_ids
    cdef double[::1] pd = pop_d
    cdef int64_t[::1] pp = push_ptr
    cdef int64_t[::1] ui = push_ids
    cdef double[::1] ud = push_d
    cdef Py_ssize_t npop = 0, npush = 0, p, e
    cdef int64_t v
    cdef double dv, de
    if seen == NULL or cand.d == NULL or cand.i == NULL or res.d == NULL or res.i == NULL:
        free(seen); free(cand.d); free(cand.i); free(res.d); free(res.i)
        raise MemoryError()
    try:
        with nogil:
            dv = _dist(data, entry, q)
            seen[entry] = 1
            _push(&cand, dv, entry, 1)
            _push(&res, dv, entry, -1)
            while cand.size > 0:
                v = cand.i[0]
                dv = cand.d[0]
                _pop(&cand, 1)
                if res.size >= L and dv > res.d[0]:
                    break
                pi[npop] = v
                pd[npop] = dv
                for p in range(indptr[v], indptr[v + 1]):
                    e = indices[p]
                    if seen[e]:
                        continue
                    seen[e] = 1
                    de = _dist(data, e, q)
                    _push(&cand, de, e, 1)
                    if res.size < L:
                        _push(&res, de, e, -1)
                    elif _lt(de, e, res.d[0], res.i[0]):
                        res.d[0] = de
                        res.i[0] = e
                        _sift_down(&res, 0, -1)
                    ui[npush] = e
                    ud[npush] = de
                    npush += 1
                npop += 1
                pp[npop] = npush
        m = res.size
        res_ids = np.empty(m, dtype=np.int64)
        res_d = np.empty(m, dtype=np.float64)
        for p in range(m):
            res_ids[p] = res.i[p]
            res_d[p] = res.d[p]
    finally:
        free(seen); free(cand.d); free(cand.i); free(res.d); free(res.i)
    order = np.lexsort((res_ids, res_d))
    return (pop_ids[:npop].copy(), pop_d[:npop].copy(), push_ptr[:npop + 1].copy(),
            push_ids[:npush].copy(), push_d[:npush].copy(),
            res_ids[order], res_d[order])


def neighbor_pair_counts(const int64_t[::1] indptr, const int32_t[::1] indices):
    """For a symmetric adjacency, count connected pairs among each vertex's
    neighbors."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    out = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef int64_t *mark = <int64_t *> calloc(n if n > 0 else 1, sizeof(int64_t))
    cdef Py_ssize_t v, p, r, u, w
    cdef int64_t cnt
    if mark == NULL:
        raise MemoryError()
    with nogil:
        for v in range(n):
            for p in range(indptr[v], indptr[v + 1]):
                mark[indices[p]] = v + 1
            cnt = 0
            for p in range(indptr[v], indptr[v + 1]):
                u = indices[p]
                for r in range(indptr[u], indptr[u + 1]):
                    w = indices[r]
                    if w > u and mark[w] == v + 1:
                        cnt += 1
            o[v] = cnt
    free(mark)
    return out
