"""NumPy reference kernels.

The compiled backend in _native.pyx mirrors these routines operation for
operation.  build_tree consumes the counter-based splitmix64 stream from
rng.py so that both backends grow bit-identical trees from the same
seed; keep any change here in lockstep with the .pyx file.
"""

from __future__ import annotations

import numpy as np

from ..rng import draw_block

BACKEND = "python"


def frame_blocks(xy, pair_i, pair_j, tri_a, tri_b, tri_c):
    """Per-frame geometric feature blocks.

    xy: (T, K, 2) float64 coordinates, y down.  pair_i/pair_j are the P
    pair index arrays, tri_a/tri_b/tri_c the Q triplet index arrays
    (0-based positions, a < b < c).  Returns (T, 4P + 3Q):

      [4p : 4p+4)        -> L, Lx, Ly, Theta of pair p  (L, Lx, Ly
                            height-normalized; Theta = atan2(dy, dx))
      [4P + 3q : +3)     -> interior angles of triplet q at vertices
                            a, b, c

    Caller guarantees a strictly positive vertical extent per frame.  A
    triplet with any two coincident points gets three zero angles.
    """
    xy = np.ascontiguousarray(xy, dtype=np.float64)
    T = xy.shape[0]
    x = xy[:, :, 0]
    y = xy[:, :, 1]
    h = y.max(axis=1) - y.min(axis=1)
    hh = h[:, None]

    P = len(pair_i)
    Q = len(tri_a)
    out = np.empty((T, 4 * P + 3 * Q), dtype=np.float64)

    dx = x[:, pair_j] - x[:, pair_i]
    dy = y[:, pair_j] - y[:, pair_i]
    out[:, 0 : 4 * P : 4] = np.sqrt(dx * dx + dy * dy) / hh
    out[:, 1 : 4 * P : 4] = np.abs(dx) / hh
    out[:, 2 : 4 * P : 4] = np.abs(dy) / hh
    out[:, 3 : 4 * P : 4] = np.arctan2(dy, dx)

    base = 4 * P
    abx = x[:, tri_b] - x[:, tri_a]
    aby = y[:, tri_b] - y[:, tri_a]
    acx = x[:, tri_c] - x[:, tri_a]
    acy = y[:, tri_c] - y[:, tri_a]
    bcx = x[:, tri_c] - x[:, tri_b]
    bcy = y[:, tri_c] - y[:, tri_b]
    # atan2(2*area, dot) keeps full precision on thin triangles, where
    # arccos of the normalized dot loses ~1/sin(angle)
    cr = np.abs(abx * acy - aby * acx)
    ang_a = np.arctan2(cr, abx * acx + aby * acy)
    ang_b = np.arctan2(cr, -(abx * bcx + aby * bcy))
    ang_c = np.arctan2(cr, acx * bcx + acy * bcy)
    bad = (
        ((abx == 0.0) & (aby == 0.0))
        | ((acx == 0.0) & (acy == 0.0))
        | ((bcx == 0.0) & (bcy == 0.0))
    )
    ang_a[bad] = 0.0
    ang_b[bad] = 0.0
    ang_c[bad] = 0.0
    out[:, base + 0 : base + 3 * Q : 3] = ang_a
    out[:, base + 1 : base + 3 * Q : 3] = ang_b
    out[:, base + 2 : base + 3 * Q : 3] = ang_c
    return out


def _sample_features(seed, counter, d, mtry):
    # partial Fisher-Yates over a fresh 0..d-1 pool; one draw per slot
    pool = np.arange(d, dtype=np.int64)
    r = draw_block(seed, counter, mtry)
    for t in range(mtry):
        j = t + int(r[t] % np.uint64(d - t))
        pool[t], pool[j] = pool[j], pool[t]
    return pool[:mtry]


def _best_split(Xs_cols, ys_cols, n_classes, min_leaf):
    """Best Gini split over pre-gathered columns.

    Xs_cols: (nn, mtry) feature values of the node's samples, ys_cols the
    matching class ids.  Returns (col, thr, cost) or None.  Cost for a
    candidate is nl*(1-sl) + nr*(1-sr) with s = sum of squared class
    fractions; ties resolve to the first candidate in feature-major,
    threshold-ascending order, matching the compiled backend's scan.
    """
    nn, mtry = Xs_cols.shape
    order = np.argsort(Xs_cols, axis=0, kind="stable")
    Xs = np.take_along_axis(Xs_cols, order, axis=0)
    ys = np.take_along_axis(ys_cols, order, axis=0)

    onehot = ys[:, :, None] == np.arange(n_classes, dtype=ys.dtype)[None, None, :]
    cum = np.cumsum(onehot, axis=0, dtype=np.float64)
    cl = cum[:-1]
    cr = cum[-1][None, :, :] - cl

    nl = np.arange(1, nn, dtype=np.float64)[:, None, None]
    nr = float(nn) - nl
    rl = cl / nl
    rr = cr / nr
    sl = np.sum(rl * rl, axis=2)
    sr = np.sum(rr * rr, axis=2)
    cost = nl[:, :, 0] * (1.0 - sl) + nr[:, :, 0] * (1.0 - sr)

    nl1 = np.arange(1, nn)
    valid = (
        (Xs[1:] > Xs[:-1])
        & (nl1 >= min_leaf)[:, None]
        & ((nn - nl1) >= min_leaf)[:, None]
    )
    cost[~valid] = np.inf

    flat = cost.T.ravel()
    k = int(np.argmin(flat))
    if not np.isfinite(flat[k]):
        return None
    col, t = divmod(k, nn - 1)
    a = Xs[t, col]
    b = Xs[t + 1, col]
    thr = (a + b) / 2.0
    if thr == b:
        thr = a
    return col, float(thr), float(flat[k])


def build_tree(X, y, n_classes, max_depth, mtry, min_leaf, seed):
    """Grow one CART tree on a bootstrap of (X, y).

    X: (n, d) float64, y: (n,) int class ids, seed: the per-tree stream
    seed.  Stream layout: draws 0..n-1 are the bootstrap (index mod n),
    then mtry draws per internal-candidate node in depth-first preorder,
    left child first.  Returns (feature, threshold, left, right, value,
    decrease): flat node arrays in preorder with feature = -1 at leaves,
    value holding per-node class fractions, and decrease the per-feature
    Gini importance sums.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int32)
    n, d = X.shape

    boot = (draw_block(seed, 0, n) % np.uint64(n)).astype(np.intp)
    counter = n

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[np.ndarray] = []
    decrease = np.zeros(d, dtype=np.float64)

    def new_node(counts, nn):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(counts / float(nn))
        return len(feature) - 1

    def grow(idx, depth):
        nonlocal counter
        nn = idx.size
        counts = np.bincount(y[idx], minlength=n_classes).astype(np.float64)
        node = new_node(counts, nn)
        if depth >= max_depth or nn < 2 * min_leaf or counts.max() == nn:
            return node
        feats = _sample_features(seed, counter, d, mtry)
        counter += mtry
        found = _best_split(X[np.ix_(idx, feats)], y[idx][:, None].repeat(mtry, 1), n_classes, min_leaf)
        if found is None:
            return node
        col, thr, cost = found
        f = int(feats[col])
        gp = 1.0
        for k in range(n_classes):
            r = counts[k] / float(nn)
            gp -= r * r
        decrease[f] += nn * gp - cost
        feature[node] = f
        threshold[node] = thr
        mask = X[idx, f] <= thr
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(boot, 0)
    return (
        np.asarray(feature, dtype=np.int32),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int32),
        np.asarray(right, dtype=np.int32),
        np.asarray(value, dtype=np.float64),
        decrease,
    )


def tree_leaf_values(Xq, feature, threshold, left, right, value):
    """Route query rows to leaves; returns (m, n_classes) class fractions."""
    Xq = np.ascontiguousarray(Xq, dtype=np.float64)
    m = Xq.shape[0]
    node = np.zeros(m, dtype=np.int64)
    active = np.where(feature[node] >= 0)[0]
    while active.size:
        nd = node[active]
        go_left = Xq[active, feature[nd]] <= threshold[nd]
        node[active] = np.where(go_left, left[nd], right[nd])
        active = active[feature[node[active]] >= 0]
    return value[node]
