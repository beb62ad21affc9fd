"""Pure-Python (numpy) implementations of the hot kernels.

These are the fallback for the compiled `_ckernels` extension.  Both
implementations must return bit-identical arrays; `benchmarks/bench_kernels.py`
and the test suite assert this on shared inputs.

All functions take and return int64 numpy arrays.  Outputs are sorted
lexicographically so results are deterministic regardless of backend.
"""

import numpy as np

BACKEND = "python"


def join_pairs(a_keys, b_keys):
    """All index pairs (i, j) with a_keys[i] == b_keys[j].

    Returns (ia, ib) sorted lexicographically by (ia, ib).
    """
    a = np.asarray(a_keys, dtype=np.int64)
    b = np.asarray(b_keys, dtype=np.int64)
    if len(a) == 0 or len(b) == 0:
        z = np.zeros(0, dtype=np.int64)
        return z, z.copy()
    order_b = np.argsort(b, kind="stable")
    b_sorted = b[order_b]
    lo = np.searchsorted(b_sorted, a, side="left")
    hi = np.searchsorted(b_sorted, a, side="right")
    counts = hi - lo
    total = int(counts.sum())
    ia = np.repeat(np.arange(len(a), dtype=np.int64), counts)
    ib = np.empty(total, dtype=np.int64)
    pos = 0
    for i in range(len(a)):
        c = counts[i]
        if c:
            ib[pos:pos + c] = np.sort(order_b[lo[i]:hi[i]])
            pos += c
    return ia, ib


def paths2(src, tgt):
    """All composable edge pairs (e1, e2) with tgt[e1] == src[e2]."""
    return join_pairs(tgt, src)


def commuting_squares(src, tgt, label, fp, indep):
    """Enumerate independent commuting squares over a labelled edge set.

    A square is a quadruple (a, b, c, d) of edge indices with
      src[a] == src[c],  tgt[a] == src[b],  tgt[c] == src[d],
      tgt[b] == tgt[d],  label[b] == label[c],  label[d] == label[a],
    and indep[fp[a], fp[c]] true.  It denotes the tile a.b ~ c.d: the two
    paths run the same pair of transitions in either order.

    `indep` is a (n_fp, n_fp) uint8 matrix.  Output is an (n, 4) int64 array
    sorted lexicographically by rows.
    """
    src = np.asarray(src, dtype=np.int64)
    tgt = np.asarray(tgt, dtype=np.int64)
    label = np.asarray(label, dtype=np.int64)
    fp = np.asarray(fp, dtype=np.int64)
    indep = np.asarray(indep, dtype=np.uint8)
    ne = len(src)
    if ne == 0:
        return np.zeros((0, 4), dtype=np.int64)
    n_label = int(label.max()) + 1 if ne else 1

    # Ordered coinitial pairs (a, c), filtered by footprint independence.
    a_idx, c_idx = join_pairs(src, src)
    keep = indep[fp[a_idx], fp[c_idx]].astype(bool)
    a_idx, c_idx = a_idx[keep], c_idx[keep]
    if len(a_idx) == 0:
        return np.zeros((0, 4), dtype=np.int64)

    # Attach b: edges from tgt[a] with label[b] == label[c].
    key_pair = tgt[a_idx] * n_label + label[c_idx]
    key_edge = src * n_label + label
    p_i, b_idx = join_pairs(key_pair, key_edge)
    a2, c2 = a_idx[p_i], c_idx[p_i]
    if len(a2) == 0:
        return np.zeros((0, 4), dtype=np.int64)

    # Attach d: edges from tgt[c] with label[d] == label[a] and tgt[d] == tgt[b].
    n_node = int(max(src.max(), tgt.max())) + 1
    key_trip = (tgt[c2] * n_label + label[a2]) * n_node + tgt[b_idx]
    key_edge2 = (src * n_label + label) * n_node + tgt
    t_i, d_idx = join_pairs(key_trip, key_edge2)
    quads = np.stack([a2[t_i], b_idx[t_i], c2[t_i], d_idx[t_i]], axis=1)
    order = np.lexsort((quads[:, 3], quads[:, 2], quads[:, 1], quads[:, 0]))
    return quads[order]
