# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels (see _pykernels for contracts)."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def join_pairs(a_keys, b_keys):
    cdef cnp.int64_t[::1] a = np.ascontiguousarray(a_keys, dtype=np.int64)
    cdef cnp.int64_t[::1] b = np.ascontiguousarray(b_keys, dtype=np.int64)
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0]
    if na == 0 or nb == 0:
        z = np.zeros(0, dtype=np.int64)
        return z, z.copy()
    order_b_arr = np.argsort(np.asarray(b), kind="stable")
    cdef cnp.int64_t[::1] order_b = np.ascontiguousarray(order_b_arr, dtype=np.int64)
    b_sorted_arr = np.asarray(b)[order_b_arr]
    cdef cnp.int64_t[::1] b_sorted = np.ascontiguousarray(b_sorted_arr, dtype=np.int64)
    lo_arr = np.searchsorted(b_sorted_arr, np.asarray(a), side="left")
    hi_arr = np.searchsorted(b_sorted_arr, np.asarray(a), side="right")
    cdef cnp.int64_t[::1] lo = np.ascontiguousarray(lo_arr, dtype=np.int64)
    cdef cnp.int64_t[::1] hi = np.ascontiguousarray(hi_arr, dtype=np.int64)
    cdef Py_ssize_t total = 0, i, j, pos = 0
    for i in range(na):
        total += hi[i] - lo[i]
    ia_arr = np.empty(total, dtype=np.int64)
    ib_arr = np.empty(total, dtype=np.int64)
    cdef cnp.int64_t[::1] ia = ia_arr
    cdef cnp.int64_t[::1] ib = ib_arr
    cdef Py_ssize_t c
    for i in range(na):
        c = hi[i] - lo[i]
        if c > 0:
            for j in range(c):
                ia[pos + j] = i
                ib[pos + j] = order_b[lo[i] + j]
            # order_b slice ascends within equal keys only under stable sort of
            # positions; enforce ascending ib per ia to match the fallback.
            if c > 1:
                ib_arr[pos:pos + c].sort()
            pos += c
    return ia_arr, ib_arr


def paths2(src, tgt):
    return join_pairs(tgt, src)


def commuting_squares(src, tgt, label, fp, indep):
    cdef cnp.int64_t[::1] esrc = np.ascontiguousarray(src, dtype=np.int64)
    cdef cnp.int64_t[::1] etgt = np.ascontiguousarray(tgt, dtype=np.int64)
    cdef cnp.int64_t[::1] elab = np.ascontiguousarray(label, dtype=np.int64)
    cdef cnp.int64_t[::1] efp = np.ascontiguousarray(fp, dtype=np.int64)
    indep_arr = np.ascontiguousarray(indep, dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] ind = indep_arr
    cdef Py_ssize_t ne = esrc.shape[0]
    if ne == 0:
        return np.zeros((0, 4), dtype=np.int64)
    cdef Py_ssize_t n_node = 0, i
    for i in range(ne):
        if esrc[i] + 1 > n_node:
            n_node = esrc[i] + 1
        if etgt[i] + 1 > n_node:
            n_node = etgt[i] + 1
    cdef Py_ssize_t n_label = 0
    for i in range(ne):
        if elab[i] + 1 > n_label:
            n_label = elab[i] + 1

    # CSR index of edges by source node, edge ids ascending.
    out_count_arr = np.zeros(n_node + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] out_start = out_count_arr
    for i in range(ne):
        out_start[esrc[i] + 1] += 1
    for i in range(n_node):
        out_start[i + 1] += out_start[i]
    out_edges_arr = np.empty(ne, dtype=np.int64)
    cdef cnp.int64_t[::1] out_edges = out_edges_arr
    fill_arr = np.zeros(n_node, dtype=np.int64)
    cdef cnp.int64_t[::1] fill = fill_arr
    for i in range(ne):  # ascending i keeps per-node lists sorted
        out_edges[out_start[esrc[i]] + fill[esrc[i]]] = i
        fill[esrc[i]] += 1

    cdef list quads = []
    cdef Py_ssize_t n, pa, pc, pb, pd
    cdef cnp.int64_t a, b, c, d
    for n in range(n_node):
        for pa in range(out_start[n], out_start[n + 1]):
            a = out_edges[pa]
            for pc in range(out_start[n], out_start[n + 1]):
                c = out_edges[pc]
                if not ind[efp[a], efp[c]]:
                    continue
                for pb in range(out_start[etgt[a]], out_start[etgt[a] + 1]):
                    b = out_edges[pb]
                    if elab[b] != elab[c]:
                        continue
                    for pd in range(out_start[etgt[c]], out_start[etgt[c] + 1]):
                        d = out_edges[pd]
                        if elab[d] != elab[a] or etgt[d] != etgt[b]:
                            continue
                        quads.append((a, b, c, d))
    if not quads:
        return np.zeros((0, 4), dtype=np.int64)
    arr = np.array(quads, dtype=np.int64)
    order = np.lexsort((arr[:, 3], arr[:, 2], arr[:, 1], arr[:, 0]))
    return arr[order]
