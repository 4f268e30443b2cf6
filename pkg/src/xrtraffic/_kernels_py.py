"""Pure-Python (numpy) implementations of the hot loops.

These are the reference versions; ``_kernels.pyx`` must return identical
results for identical inputs, including the random feature order, which is
why both share the small xorshift generator below instead of numpy's.
"""

import numpy as np

BACKEND = "python"

_MASK64 = (1 << 64) - 1


class XorShift64:
    """xorshift64* seeded through one splitmix64 step."""

    def __init__(self, seed):
        z = (int(seed) + 0x9E3779B97F4A7C15) & _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z ^= z >> 31
        self.state = z or 0x9E3779B97F4A7C15

    def next(self):
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK64


def frame_runs(length, downlink, iat, len_th, dur_th, min_packets):
    """Start/end (inclusive) indices of maximal qualifying packet runs."""
    length = np.asarray(length)
    q = np.asarray(downlink, dtype=bool) & (length >= len_th)
    n = len(q)
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    linked = np.zeros(n, dtype=bool)
    linked[1:] = q[1:] & q[:-1] & (np.asarray(iat)[1:] <= dur_th)
    starts = np.flatnonzero(q & ~linked)
    # a run ends where the next packet does not link back to it
    nxt = np.zeros(n, dtype=bool)
    nxt[:-1] = linked[1:]
    ends = np.flatnonzero(q & ~nxt)
    keep = (ends - starts + 1) >= min_packets
    return starts[keep].astype(np.int64), ends[keep].astype(np.int64)


def build_tree(X, y, sample, n_classes, mtry, max_depth, min_leaf, seed):
    """Grow one CART classification tree with Gini splits.

    ``sample`` lists the (possibly repeated) training rows.  ``max_depth``
    < 0 means unlimited.  Returns flat node arrays; leaves have
    ``feature == -1``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    rng = XorShift64(seed)
    n_feat = X.shape[1]
    eye = np.eye(n_classes, dtype=np.int64)

    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.bincount(y[idx], minlength=n_classes).astype(np.int64))
        return len(feature) - 1

    root = new_node(np.asarray(sample, dtype=np.intp))
    stack = [(root, np.asarray(sample, dtype=np.intp), 0)]
    while stack:
        node, idx, depth = stack.pop()
        c = counts[node]
        n = len(idx)
        if n < 2 * min_leaf or np.count_nonzero(c) <= 1 or (0 <= max_depth <= depth):
            continue

        perm = list(range(n_feat))
        for i in range(n_feat - 1, 0, -1):
            j = rng.next() % (i + 1)
            perm[i], perm[j] = perm[j], perm[i]

        yi = y[idx]
        best_score = -np.inf
        best_f = -1
        best_thr = 0.0
        visited = 0
        nl = np.arange(1, n, dtype=np.int64)
        nr = n - nl
        for f in perm:
            if visited >= mtry and best_f >= 0:
                break
            v = X[idx, f]
            order = np.argsort(v, kind="stable")
            vs = v[order]
            if vs[0] == vs[-1]:
                continue
            visited += 1
            cl = np.cumsum(eye[yi[order]], axis=0)[:-1]
            cr = c - cl
            valid = (vs[1:] > vs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
            if not valid.any():
                continue
            sl = (cl * cl).sum(axis=1)
            sr = (cr * cr).sum(axis=1)
            score = sl / nl + sr / nr
            score[~valid] = -np.inf
            k = int(np.argmax(score))
            if score[k] > best_score:
                best_score = score[k]
                best_f = f
                lo, hi = vs[k], vs[k + 1]
                thr = (lo + hi) / 2.0
                if thr == hi or not np.isfinite(thr):
                    thr = lo
                best_thr = float(thr)
        if best_f < 0:
            continue

        mask = X[idx, best_f] <= best_thr
        li, ri = idx[mask], idx[~mask]
        lid = new_node(li)
        rid = new_node(ri)
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lid
        right[node] = rid
        stack.append((rid, ri, depth + 1))
        stack.append((lid, li, depth + 1))

    return (
        np.array(feature, dtype=np.int32),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int32),
        np.array(right, dtype=np.int32),
        np.vstack(counts).astype(np.int64),
    )


def forest_votes(feature, threshold, left, right, roots, leaf_class, X, n_classes):
    """Tally hard votes of every tree for every row of ``X``.

    Node arrays are the concatenation of all trees with absolute child
    indices; ``leaf_class`` gives the vote cast by each leaf.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    votes = np.zeros((n, n_classes), dtype=np.int64)
    rows = np.arange(n)
    for r in np.asarray(roots):
        node = np.full(n, r, dtype=np.int64)
        active = feature[node] >= 0
        while active.any():
            a = node[active]
            go_left = X[rows[active], feature[a]] <= threshold[a]
            node[active] = np.where(go_left, left[a], right[a])
            active = feature[node] >= 0
        np.add.at(votes, (rows, leaf_class[node]), 1)
    return votes
