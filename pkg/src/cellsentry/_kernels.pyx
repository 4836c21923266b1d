# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled graph and grid kernels; see _kernels_py for the reference versions."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint8_t

cnp.import_array()

BACKEND = "cython"


def tarjan_scc(const int64_t[::1] indptr, const int64_t[::1] indices):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[int64_t, ndim=1] comp_arr = np.full(n, -1, dtype=np.int64)
    cdef int64_t[::1] comp = comp_arr
    if n <= 0:
        return comp_arr
    cdef int64_t[::1] index = np.full(n, -1, dtype=np.int64)
    cdef int64_t[::1] low = np.zeros(n, dtype=np.int64)
    cdef uint8_t[::1] on_stack = np.zeros(n, dtype=np.uint8)
    cdef int64_t[::1] stack = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] call_node = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] call_pos = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t sp = 0, cp = 0
    cdef int64_t counter = 0, ncomp = 0
    cdef int64_t root, v, w, u, pos, end
    cdef bint descended
    for root in range(n):
        if index[root] != -1:
            continue
        index[root] = counter
        low[root] = counter
        counter += 1
        stack[sp] = root
        sp += 1
        on_stack[root] = 1
        call_node[cp] = root
        call_pos[cp] = indptr[root]
        cp += 1
        while cp > 0:
            v = call_node[cp - 1]
            pos = call_pos[cp - 1]
            end = indptr[v + 1]
            descended = False
            while pos < end:
                w = indices[pos]
                pos += 1
                if index[w] == -1:
                    call_pos[cp - 1] = pos
                    index[w] = counter
                    low[w] = counter
                    counter += 1
                    stack[sp] = w
                    sp += 1
                    on_stack[w] = 1
                    call_node[cp] = w
                    call_pos[cp] = indptr[w]
                    cp += 1
                    descended = True
                    break
                if on_stack[w] and index[w] < low[v]:
                    low[v] = index[w]
            if descended:
                continue
            cp -= 1
            if low[v] == index[v]:
                while True:
                    sp -= 1
                    w = stack[sp]
                    on_stack[w] = 0
                    comp[w] = ncomp
                    if w == v:
                        break
                ncomp += 1
            if cp > 0:
                u = call_node[cp - 1]
                if low[v] < low[u]:
                    low[u] = low[v]
    return comp_arr


def reachable(const int64_t[::1] indptr, const int64_t[::1] indices, const int64_t[::1] seeds):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[uint8_t, ndim=1] seen_arr = np.zeros(max(n, 0), dtype=np.uint8)
    cdef uint8_t[::1] seen = seen_arr
    if n <= 0:
        return seen_arr
    cdef int64_t[::1] frontier = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t top = 0, i
    cdef int64_t v, w, pos
    for i in range(seeds.shape[0]):
        v = seeds[i]
        if not seen[v]:
            seen[v] = 1
            frontier[top] = v
            top += 1
    while top > 0:
        top -= 1
        v = frontier[top]
        for pos in range(indptr[v], indptr[v + 1]):
            w = indices[pos]
            if not seen[w]:
                seen[w] = 1
                frontier[top] = w
                top += 1
    return seen_arr


def line_outliers(const int64_t[::1] codes, Py_ssize_t min_run, double threshold):
    cdef Py_ssize_t n = codes.shape[0]
    cdef Py_ssize_t i = 0, j, k, length, hits, count, nout = 0
    cdef int64_t cand
    cdef cnp.ndarray[int64_t, ndim=1] out_arr = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] out = out_arr
    while i < n:
        if codes[i] < 0:
            i += 1
            continue
        j = i
        while j < n and codes[j] >= 0:
            j += 1
        length = j - i
        if length >= min_run:
            cand = -1
            count = 0
            for k in range(i, j):
                if count == 0:
                    cand = codes[k]
                    count = 1
                elif codes[k] == cand:
                    count += 1
                else:
                    count -= 1
            hits = 0
            for k in range(i, j):
                if codes[k] == cand:
                    hits += 1
            if 2 * hits > length and (<double>hits) / length >= threshold:
                for k in range(i, j):
                    if codes[k] != cand:
                        out[nout] = k
                        nout += 1
        i = j
    return out_arr[:nout].copy()
