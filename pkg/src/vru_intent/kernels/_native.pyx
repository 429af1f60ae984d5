# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels.

Mirrors _python.py operation for operation.  build_tree consumes the
same counter-based splitmix64 stream and orders every floating-point
operation like the NumPy reference (division before squaring, class
index ascending, cost = nl*(1-sl) + nr*(1-sr)), so the two backends
grow bit-identical trees; compile with -ffp-contract=off so the C
compiler cannot fuse that arithmetic.  Bit-identity holds for fewer
than 8 classes (beyond that NumPy's pairwise summation reorders the
class sum).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, atan2, fabs, sqrt
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy

cnp.import_array()

BACKEND = "native"

ctypedef cnp.int32_t i32
ctypedef cnp.int64_t i64
ctypedef unsigned long long u64

cdef extern from *:
    """
    #include <stdint.h>
    #include <stddef.h>
    static inline uint64_t vi_mix64(uint64_t z) {
        z = (z ^ (z >> 30)) * UINT64_C(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)) * UINT64_C(0x94D049BB133111EB);
        return z ^ (z >> 31);
    }
    static inline uint64_t vi_draw(uint64_t seed, uint64_t index) {
        return vi_mix64(seed + (index + UINT64_C(1)) * UINT64_C(0x9E3779B97F4A7C15));
    }

    typedef struct { double v; int32_t c; } ValCls;

    /* Ascending sort by value only; ties may land in any order, which
       cannot change the chosen split (equal values are never valid
       candidate boundaries and class counts at a boundary are
       order-free).  Hand-rolled to avoid qsort's comparator-callback
       overhead; requires finite keys, which the callers guarantee. */
    static void vi_sort_valcls(ValCls* a, ptrdiff_t lo, ptrdiff_t hi) {
        while (hi - lo > 24) {
            ptrdiff_t mid = lo + (hi - lo) / 2;
            double p0 = a[lo].v, p1 = a[mid].v, p2 = a[hi].v;
            double pivot = p0 < p1 ? (p1 < p2 ? p1 : (p0 < p2 ? p2 : p0))
                                   : (p0 < p2 ? p0 : (p1 < p2 ? p2 : p1));
            ptrdiff_t i = lo, j = hi;
            while (i <= j) {
                while (a[i].v < pivot) i++;
                while (a[j].v > pivot) j--;
                if (i <= j) {
                    ValCls t = a[i]; a[i] = a[j]; a[j] = t;
                    i++; j--;
                }
            }
            if (j - lo < hi - i) {           /* recurse into the smaller half */
                vi_sort_valcls(a, lo, j);
                lo = i;
            } else {
                vi_sort_valcls(a, i, hi);
                hi = j;
            }
        }
        for (ptrdiff_t i = lo + 1; i <= hi; i++) {
            ValCls key = a[i];
            ptrdiff_t j = i - 1;
            while (j >= lo && a[j].v > key.v) { a[j + 1] = a[j]; j--; }
            a[j + 1] = key;
        }
    }
    """
    u64 vi_draw(u64 seed, u64 index) nogil
    ctypedef struct ValCls:
        double v
        i32 c
    void vi_sort_valcls(ValCls* a, Py_ssize_t lo, Py_ssize_t hi) nogil


def frame_blocks(xy, pair_i, pair_j, tri_a, tri_b, tri_c):
    """See _python.frame_blocks; same layout, scalar loops."""
    cdef const double[:, :, ::1] pts = np.ascontiguousarray(xy, dtype=np.float64)
    cdef const i64[::1] pi = np.ascontiguousarray(pair_i, dtype=np.int64)
    cdef const i64[::1] pj = np.ascontiguousarray(pair_j, dtype=np.int64)
    cdef const i64[::1] ta = np.ascontiguousarray(tri_a, dtype=np.int64)
    cdef const i64[::1] tb = np.ascontiguousarray(tri_b, dtype=np.int64)
    cdef const i64[::1] tc = np.ascontiguousarray(tri_c, dtype=np.int64)

    cdef Py_ssize_t T = pts.shape[0]
    cdef Py_ssize_t K = pts.shape[1]
    cdef Py_ssize_t P = pi.shape[0]
    cdef Py_ssize_t Q = ta.shape[0]
    out_arr = np.empty((T, 4 * P + 3 * Q), dtype=np.float64)
    cdef double[:, ::1] out = out_arr

    cdef Py_ssize_t t, k, p, q, base
    cdef double ymin, ymax, h, dx, dy
    cdef double abx, aby, acx, acy, bcx, bcy, cr
    with nogil:
        for t in range(T):
            ymin = pts[t, 0, 1]
            ymax = pts[t, 0, 1]
            for k in range(1, K):
                if pts[t, k, 1] < ymin:
                    ymin = pts[t, k, 1]
                if pts[t, k, 1] > ymax:
                    ymax = pts[t, k, 1]
            h = ymax - ymin
            for p in range(P):
                dx = pts[t, pj[p], 0] - pts[t, pi[p], 0]
                dy = pts[t, pj[p], 1] - pts[t, pi[p], 1]
                out[t, 4 * p] = sqrt(dx * dx + dy * dy) / h
                out[t, 4 * p + 1] = fabs(dx) / h
                out[t, 4 * p + 2] = fabs(dy) / h
                out[t, 4 * p + 3] = atan2(dy, dx)
            base = 4 * P
            for q in range(Q):
                abx = pts[t, tb[q], 0] - pts[t, ta[q], 0]
                aby = pts[t, tb[q], 1] - pts[t, ta[q], 1]
                acx = pts[t, tc[q], 0] - pts[t, ta[q], 0]
                acy = pts[t, tc[q], 1] - pts[t, ta[q], 1]
                bcx = pts[t, tc[q], 0] - pts[t, tb[q], 0]
                bcy = pts[t, tc[q], 1] - pts[t, tb[q], 1]
                if ((abx == 0.0 and aby == 0.0)
                        or (acx == 0.0 and acy == 0.0)
                        or (bcx == 0.0 and bcy == 0.0)):
                    out[t, base + 3 * q] = 0.0
                    out[t, base + 3 * q + 1] = 0.0
                    out[t, base + 3 * q + 2] = 0.0
                    continue
                # atan2(2*area, dot) keeps full precision on thin
                # triangles, where acos of the normalized dot loses
                # ~1/sin(angle)
                cr = fabs(abx * acy - aby * acx)
                out[t, base + 3 * q] = atan2(cr, abx * acx + aby * acy)
                out[t, base + 3 * q + 1] = atan2(cr, -(abx * bcx + aby * bcy))
                out[t, base + 3 * q + 2] = atan2(cr, acx * bcx + acy * bcy)
    return out_arr


cdef struct BuildCtx:
    const double* X
    const i32* y
    Py_ssize_t n
    Py_ssize_t d
    int n_classes
    int max_depth
    int mtry
    int min_leaf
    u64 seed
    u64 counter
    Py_ssize_t* samples
    Py_ssize_t* scratch
    ValCls* buf
    i64* pool
    i64* feats
    double* cl
    double* ct
    i32* feature
    double* threshold
    i32* left
    i32* right
    double* value
    double* decrease
    Py_ssize_t n_nodes


cdef Py_ssize_t _grow(BuildCtx* ctx, Py_ssize_t start, Py_ssize_t end,
                      int depth) noexcept nogil:
    cdef Py_ssize_t nn = end - start
    cdef Py_ssize_t node = ctx.n_nodes
    cdef int C = ctx.n_classes
    cdef Py_ssize_t i, t
    cdef int k
    ctx.n_nodes += 1

    for k in range(C):
        ctx.ct[k] = 0.0
    for i in range(start, end):
        ctx.ct[ctx.y[ctx.samples[i]]] += 1.0
    for k in range(C):
        ctx.value[node * C + k] = ctx.ct[k] / <double> nn
    ctx.feature[node] = -1
    ctx.threshold[node] = 0.0
    ctx.left[node] = -1
    ctx.right[node] = -1

    cdef double maxc = 0.0
    for k in range(C):
        if ctx.ct[k] > maxc:
            maxc = ctx.ct[k]
    if depth >= ctx.max_depth or nn < 2 * ctx.min_leaf or maxc == <double> nn:
        return node

    # per-node feature subsample: partial Fisher-Yates over a fresh pool
    cdef Py_ssize_t d = ctx.d
    cdef u64 r
    cdef Py_ssize_t j
    cdef i64 tmp
    for i in range(d):
        ctx.pool[i] = i
    for i in range(ctx.mtry):
        r = vi_draw(ctx.seed, ctx.counter + <u64> i)
        j = i + <Py_ssize_t> (r % <u64> (d - i))
        tmp = ctx.pool[i]
        ctx.pool[i] = ctx.pool[j]
        ctx.pool[j] = tmp
        ctx.feats[i] = ctx.pool[i]
    ctx.counter += <u64> ctx.mtry

    cdef double best_cost = INFINITY
    cdef i64 best_f = -1
    cdef double best_thr = 0.0
    cdef Py_ssize_t fpos
    cdef i64 f
    cdef Py_ssize_t nl, nr
    cdef double sl, sr, rc, cost, a, b, m
    for fpos in range(ctx.mtry):
        f = ctx.feats[fpos]
        for i in range(nn):
            ctx.buf[i].v = ctx.X[ctx.samples[start + i] * d + f]
            ctx.buf[i].c = ctx.y[ctx.samples[start + i]]
        vi_sort_valcls(ctx.buf, 0, nn - 1)
        for k in range(C):
            ctx.cl[k] = 0.0
        for t in range(nn - 1):
            ctx.cl[ctx.buf[t].c] += 1.0
            if not (ctx.buf[t + 1].v > ctx.buf[t].v):
                continue
            nl = t + 1
            nr = nn - nl
            if nl < ctx.min_leaf or nr < ctx.min_leaf:
                continue
            sl = 0.0
            for k in range(C):
                rc = ctx.cl[k] / <double> nl
                sl += rc * rc
            sr = 0.0
            for k in range(C):
                rc = (ctx.ct[k] - ctx.cl[k]) / <double> nr
                sr += rc * rc
            cost = (<double> nl) * (1.0 - sl) + (<double> nr) * (1.0 - sr)
            if cost < best_cost:
                best_cost = cost
                best_f = f
                a = ctx.buf[t].v
                b = ctx.buf[t + 1].v
                m = (a + b) / 2.0
                if m == b:
                    m = a
                best_thr = m

    if best_f < 0:
        return node

    cdef double gp = 1.0
    for k in range(C):
        rc = ctx.ct[k] / <double> nn
        gp -= rc * rc
    ctx.decrease[best_f] += (<double> nn) * gp - best_cost

    # stable partition on x <= thr via the scratch buffer
    cdef Py_ssize_t nleft = 0
    for i in range(start, end):
        if ctx.X[ctx.samples[i] * d + best_f] <= best_thr:
            nleft += 1
    cdef Py_ssize_t li = 0
    cdef Py_ssize_t ri = nleft
    for i in range(start, end):
        if ctx.X[ctx.samples[i] * d + best_f] <= best_thr:
            ctx.scratch[li] = ctx.samples[i]
            li += 1
        else:
            ctx.scratch[ri] = ctx.samples[i]
            ri += 1
    memcpy(ctx.samples + start, ctx.scratch, nn * sizeof(Py_ssize_t))

    ctx.feature[node] = <i32> best_f
    ctx.threshold[node] = best_thr
    ctx.left[node] = <i32> _grow(ctx, start, start + nleft, depth + 1)
    ctx.right[node] = <i32> _grow(ctx, start + nleft, end, depth + 1)
    return node


def build_tree(X, y, int n_classes, int max_depth, int mtry, int min_leaf,
               seed):
    """See _python.build_tree; identical stream and arithmetic."""
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const i32[::1] yv = np.ascontiguousarray(y, dtype=np.int32)
    cdef Py_ssize_t n = Xv.shape[0]
    cdef Py_ssize_t d = Xv.shape[1]
    cdef u64 useed = <u64> (<unsigned long long> seed)

    cdef Py_ssize_t cap = 2 * n + 1
    feature_arr = np.empty(cap, dtype=np.int32)
    threshold_arr = np.empty(cap, dtype=np.float64)
    left_arr = np.empty(cap, dtype=np.int32)
    right_arr = np.empty(cap, dtype=np.int32)
    value_arr = np.empty((cap, n_classes), dtype=np.float64)
    decrease_arr = np.zeros(d, dtype=np.float64)
    cdef i32[::1] feature = feature_arr
    cdef double[::1] threshold = threshold_arr
    cdef i32[::1] left = left_arr
    cdef i32[::1] right = right_arr
    cdef double[:, ::1] value = value_arr
    cdef double[::1] decrease = decrease_arr

    cdef BuildCtx ctx
    ctx.X = &Xv[0, 0]
    ctx.y = &yv[0]
    ctx.n = n
    ctx.d = d
    ctx.n_classes = n_classes
    ctx.max_depth = max_depth
    ctx.mtry = mtry
    ctx.min_leaf = min_leaf
    ctx.seed = useed
    ctx.counter = <u64> n
    ctx.feature = &feature[0]
    ctx.threshold = &threshold[0]
    ctx.left = &left[0]
    ctx.right = &right[0]
    ctx.value = &value[0, 0]
    ctx.decrease = &decrease[0]
    ctx.n_nodes = 0

    ctx.samples = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    ctx.scratch = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    ctx.buf = <ValCls*> malloc(n * sizeof(ValCls))
    ctx.pool = <i64*> malloc(d * sizeof(i64))
    ctx.feats = <i64*> malloc(mtry * sizeof(i64))
    ctx.cl = <double*> malloc(n_classes * sizeof(double))
    ctx.ct = <double*> malloc(n_classes * sizeof(double))
    if (ctx.samples == NULL or ctx.scratch == NULL or ctx.buf == NULL
            or ctx.pool == NULL or ctx.feats == NULL or ctx.cl == NULL
            or ctx.ct == NULL):
        free(ctx.samples); free(ctx.scratch); free(ctx.buf)
        free(ctx.pool); free(ctx.feats); free(ctx.cl); free(ctx.ct)
        raise MemoryError("build_tree work buffers")

    cdef Py_ssize_t i
    try:
        with nogil:
            for i in range(n):
                ctx.samples[i] = <Py_ssize_t> (vi_draw(useed, <u64> i) % <u64> n)
            _grow(&ctx, 0, n, 0)
    finally:
        free(ctx.samples); free(ctx.scratch); free(ctx.buf)
        free(ctx.pool); free(ctx.feats); free(ctx.cl); free(ctx.ct)

    cdef Py_ssize_t nn = ctx.n_nodes
    return (
        feature_arr[:nn].copy(),
        threshold_arr[:nn].copy(),
        left_arr[:nn].copy(),
        right_arr[:nn].copy(),
        value_arr[:nn].copy(),
        decrease_arr,
    )


def tree_leaf_values(Xq, feature, threshold, left, right, value):
    """See _python.tree_leaf_values."""
    cdef const double[:, ::1] X = np.ascontiguousarray(Xq, dtype=np.float64)
    cdef const i32[::1] fe = np.ascontiguousarray(feature, dtype=np.int32)
    cdef const double[::1] th = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef const i32[::1] le = np.ascontiguousarray(left, dtype=np.int32)
    cdef const i32[::1] ri = np.ascontiguousarray(right, dtype=np.int32)
    cdef const double[:, ::1] va = np.ascontiguousarray(value, dtype=np.float64)

    cdef Py_ssize_t m = X.shape[0]
    cdef Py_ssize_t C = va.shape[1]
    out_arr = np.empty((m, C), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, node
    cdef Py_ssize_t k
    with nogil:
        for i in range(m):
            node = 0
            while fe[node] >= 0:
                if X[i, fe[node]] <= th[node]:
                    node = le[node]
                else:
                    node = ri[node]
            for k in range(C):
                out[i, k] = va[node, k]
    return out_arr
