# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops in ``_kernels_py``.

Results must match the numpy reference exactly, so no fast-math and the
same xorshift stream drives feature sampling.
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t, int32_t
from libc.math cimport INFINITY

cnp.import_array()

BACKEND = "cython"

ctypedef cnp.intp_t intp


cdef inline uint64_t _splitmix(uint64_t seed) nogil:
    cdef uint64_t z = seed + 0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    z = z ^ (z >> 31)
    if z == 0:
        z = 0x9E3779B97F4A7C15ULL
    return z


cdef inline uint64_t _xorshift(uint64_t* state) nogil:
    cdef uint64_t x = state[0]
    x ^= x >> 12
    x ^= x << 25
    x ^= x >> 27
    state[0] = x
    return x * 0x2545F4914F6CDD1DULL


def frame_runs(length, downlink, iat, long long len_th, double dur_th, long long min_packets):
    cdef const int64_t[::1] ln = np.ascontiguousarray(length, dtype=np.int64)
    cdef const cnp.uint8_t[::1] dl = np.ascontiguousarray(downlink, dtype=np.uint8)
    cdef const double[::1] ia = np.ascontiguousarray(iat, dtype=np.float64)
    cdef Py_ssize_t n = ln.shape[0]
    cdef int64_t[::1] starts = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] ends = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t j, k = 0, run_start = -1
    cdef bint q, prev_q = False
    with nogil:
        for j in range(n):
            q = dl[j] != 0 and ln[j] >= len_th
            if q and prev_q and ia[j] <= dur_th:
                pass
            else:
                if run_start >= 0 and j - run_start >= min_packets:
                    starts[k] = run_start
                    ends[k] = j - 1
                    k += 1
                run_start = j if q else -1
            prev_q = q
        if run_start >= 0 and n - run_start >= min_packets:
            starts[k] = run_start
            ends[k] = n - 1
            k += 1
    return np.asarray(starts[:k]).copy(), np.asarray(ends[:k]).copy()


cdef inline void _swap(double* v, intp* c, Py_ssize_t i, Py_ssize_t j) nogil:
    cdef double tv = v[i]
    cdef intp tc = c[i]
    v[i] = v[j]
    c[i] = c[j]
    v[j] = tv
    c[j] = tc


cdef void _sort(double* v, intp* c, Py_ssize_t n) nogil:
    # quicksort (median of three) with insertion sort for short ranges
    cdef Py_ssize_t i, j, mid
    cdef double pivot, tv
    cdef intp tc
    while n > 16:
        mid = n // 2
        if v[mid] < v[0]:
            _swap(v, c, mid, 0)
        if v[n - 1] < v[0]:
            _swap(v, c, n - 1, 0)
        if v[n - 1] < v[mid]:
            _swap(v, c, n - 1, mid)
        pivot = v[mid]
        i = 0
        j = n - 1
        while i <= j:
            while v[i] < pivot:
                i += 1
            while v[j] > pivot:
                j -= 1
            if i <= j:
                _swap(v, c, i, j)
                i += 1
                j -= 1
        # recurse into the smaller half, loop on the larger
        if j + 1 < n - i:
            _sort(v, c, j + 1)
            v = v + i
            c = c + i
            n = n - i
        else:
            _sort(v + i, c + i, n - i)
            n = j + 1
    for i in range(1, n):
        tv = v[i]
        tc = c[i]
        j = i - 1
        while j >= 0 and v[j] > tv:
            v[j + 1] = v[j]
            c[j + 1] = c[j]
            j -= 1
        v[j + 1] = tv
        c[j + 1] = tc


def build_tree(X, y, sample, Py_ssize_t n_classes, Py_ssize_t mtry,
               Py_ssize_t max_depth, Py_ssize_t min_leaf, seed):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const intp[::1] yv = np.ascontiguousarray(y, dtype=np.intp)
    cdef intp[::1] idx = np.array(sample, dtype=np.intp, copy=True)
    cdef Py_ssize_t m = idx.shape[0]
    cdef Py_ssize_t n_feat = Xv.shape[1]
    cdef Py_ssize_t cap = 2 * m + 1
    cdef Py_ssize_t C = n_classes

    feature_a = np.full(cap, -1, dtype=np.int32)
    threshold_a = np.zeros(cap, dtype=np.float64)
    left_a = np.full(cap, -1, dtype=np.int32)
    right_a = np.full(cap, -1, dtype=np.int32)
    counts_a = np.zeros((cap, C), dtype=np.int64)
    cdef int32_t[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef int32_t[::1] left = left_a
    cdef int32_t[::1] right = right_a
    cdef int64_t[:, ::1] counts = counts_a

    # per-node work buffers
    vals_a = np.empty(m, dtype=np.float64)
    cls_a = np.empty(m, dtype=np.intp)
    cl_a = np.empty(C, dtype=np.int64)
    perm_a = np.empty(n_feat, dtype=np.intp)
    cdef double[::1] vals = vals_a
    cdef intp[::1] cls = cls_a
    cdef int64_t[::1] cl = cl_a
    cdef intp[::1] perm = perm_a

    # explicit DFS stack: node, start, end, depth
    stack_a = np.empty((cap, 4), dtype=np.intp)
    cdef intp[:, ::1] stack = stack_a
    cdef Py_ssize_t sp = 0

    cdef uint64_t state = _splitmix(<uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF))
    cdef Py_ssize_t n_nodes = 1
    cdef Py_ssize_t node, start, end, depth, n, i, j, f, fi, k, visited, nonzero
    cdef Py_ssize_t best_f, lid, rid
    cdef int64_t c, sl, sr, nl, nr
    cdef double score, best_score, best_thr, lo, hi, thr
    cdef intp tmp

    with nogil:
        for i in range(m):
            counts[0, yv[idx[i]]] += 1
        stack[0, 0] = 0
        stack[0, 1] = 0
        stack[0, 2] = m
        stack[0, 3] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack[sp, 0]
            start = stack[sp, 1]
            end = stack[sp, 2]
            depth = stack[sp, 3]
            n = end - start
            nonzero = 0
            for k in range(C):
                if counts[node, k] > 0:
                    nonzero += 1
            if n < 2 * min_leaf or nonzero <= 1 or (max_depth >= 0 and depth >= max_depth):
                continue

            for i in range(n_feat):
                perm[i] = i
            for i in range(n_feat - 1, 0, -1):
                j = <Py_ssize_t>(_xorshift(&state) % <uint64_t>(i + 1))
                tmp = perm[i]
                perm[i] = perm[j]
                perm[j] = tmp

            best_score = -INFINITY
            best_f = -1
            best_thr = 0.0
            visited = 0
            for fi in range(n_feat):
                if visited >= mtry and best_f >= 0:
                    break
                f = perm[fi]
                for i in range(n):
                    vals[i] = Xv[idx[start + i], f]
                    cls[i] = yv[idx[start + i]]
                _sort(&vals[0], &cls[0], n)
                if vals[0] == vals[n - 1]:
                    continue
                visited += 1
                sl = 0
                sr = 0
                for k in range(C):
                    cl[k] = 0
                    sr += counts[node, k] * counts[node, k]
                for i in range(1, n):
                    c = cls[i - 1]
                    # move one item of class c from right to left
                    sl += 2 * cl[c] + 1
                    sr -= 2 * (counts[node, c] - cl[c]) - 1
                    cl[c] += 1
                    if not (vals[i] > vals[i - 1]):
                        continue
                    nl = i
                    nr = n - i
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    score = (<double>sl) / (<double>nl) + (<double>sr) / (<double>nr)
                    if score > best_score:
                        best_score = score
                        best_f = f
                        lo = vals[i - 1]
                        hi = vals[i]
                        thr = (lo + hi) / 2.0
                        if thr == hi or thr - thr != 0.0:
                            thr = lo
                        best_thr = thr
            if best_f < 0:
                continue

            # partition idx[start:end] so rows going left come first
            i = start
            j = end - 1
            while i <= j:
                if Xv[idx[i], best_f] <= best_thr:
                    i += 1
                else:
                    tmp = idx[i]
                    idx[i] = idx[j]
                    idx[j] = tmp
                    j -= 1
            lid = n_nodes
            rid = n_nodes + 1
            n_nodes += 2
            for k in range(start, i):
                counts[lid, yv[idx[k]]] += 1
            for k in range(i, end):
                counts[rid, yv[idx[k]]] += 1
            feature[node] = <int32_t>best_f
            threshold[node] = best_thr
            left[node] = <int32_t>lid
            right[node] = <int32_t>rid
            stack[sp, 0] = rid
            stack[sp, 1] = i
            stack[sp, 2] = end
            stack[sp, 3] = depth + 1
            sp += 1
            stack[sp, 0] = lid
            stack[sp, 1] = start
            stack[sp, 2] = i
            stack[sp, 3] = depth + 1
            sp += 1

    return (
        feature_a[:n_nodes].copy(),
        threshold_a[:n_nodes].copy(),
        left_a[:n_nodes].copy(),
        right_a[:n_nodes].copy(),
        counts_a[:n_nodes].copy(),
    )


def forest_votes(feature, threshold, left, right, roots, leaf_class, X, Py_ssize_t n_classes):
    cdef const int32_t[::1] fe = np.ascontiguousarray(feature, dtype=np.int32)
    cdef const double[::1] th = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef const int32_t[::1] le = np.ascontiguousarray(left, dtype=np.int32)
    cdef const int32_t[::1] ri = np.ascontiguousarray(right, dtype=np.int32)
    cdef const int64_t[::1] ro = np.ascontiguousarray(roots, dtype=np.int64)
    cdef const int64_t[::1] lc = np.ascontiguousarray(leaf_class, dtype=np.int64)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], T = ro.shape[0]
    votes_a = np.zeros((n, n_classes), dtype=np.int64)
    cdef int64_t[:, ::1] votes = votes_a
    cdef Py_ssize_t r, t, node
    with nogil:
        for r in range(n):
            for t in range(T):
                node = ro[t]
                while fe[node] >= 0:
                    if Xv[r, fe[node]] <= th[node]:
                        node = le[node]
                    else:
                        node = ri[node]
                votes[r, lc[node]] += 1
    return votes_a
