# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; semantics mirror ``_pykernels`` bit for bit."""

import numpy as np

from libc.stdint cimport int32_t, int64_t, uint64_t
from libc.stdlib cimport malloc, free, qsort
from libc.string cimport memset

cdef enum:
    GINI = 0
    MSE = 1

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t FEATURE_SALT = 0x5851F42D4C957F2DULL
cdef uint64_t SPLIT_SALT = 0x14057B7EF767814FULL


cdef inline uint64_t mix64(uint64_t x) noexcept nogil:
    x = x + GOLDEN
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL
    return x ^ (x >> 31)


cdef inline uint64_t child_key(uint64_t key, uint64_t side) noexcept nogil:
    return mix64(key * 3 + side)


cdef inline double unit_interval(uint64_t r) noexcept nogil:
    return (<double>(r >> 12) + 0.5) * (1.0 / 4503599627370496.0)


ctypedef struct Frame:
    int64_t start
    int64_t end
    int64_t depth
    uint64_t key
    int64_t parent
    int64_t side


ctypedef struct CodePos:
    int64_t code
    int64_t pos


cdef int cmp_codepos(const void* a, const void* b) noexcept nogil:
    cdef const CodePos* x = <const CodePos*>a
    cdef const CodePos* y = <const CodePos*>b
    if x.code != y.code:
        return -1 if x.code < y.code else 1
    if x.pos != y.pos:
        return -1 if x.pos < y.pos else 1
    return 0


cdef struct Work:
    # per-feature compacted bins
    int64_t* bin_code
    double* bin_val      # nb x K (gini) or nb x 2 (w, s) for mse
    double* hist         # dense histogram scratch
    int64_t* hist_cnt
    CodePos* pairs
    double* cl
    double* tot


cdef int64_t gather_bins(const int32_t[:, ::1] codes, int64_t f, int64_t nbins_f,
                         const int64_t* samp, int64_t start, int64_t end,
                         const int64_t[::1] y, const double[::1] target,
                         const double[::1] weights, int crit, int64_t K, Work* wk) noexcept nogil:
    """Aggregate node samples per present code of feature f; returns #bins."""
    cdef int64_t m = end - start
    cdef int64_t width = K if crit == GINI else 2
    cdef int64_t p, i, b, c, nb, k
    cdef double w
    if nbins_f <= 4 * m:
        memset(wk.hist, 0, nbins_f * width * sizeof(double))
        memset(wk.hist_cnt, 0, nbins_f * sizeof(int64_t))
        for p in range(start, end):
            i = samp[p]
            c = codes[i, f]
            w = weights[i]
            wk.hist_cnt[c] += 1
            if crit == GINI:
                wk.hist[c * width + y[i]] += w
            else:
                wk.hist[c * width] += w
                wk.hist[c * width + 1] += w * target[i]
        nb = 0
        for b in range(nbins_f):
            if wk.hist_cnt[b] > 0:
                wk.bin_code[nb] = b
                for k in range(width):
                    wk.bin_val[nb * width + k] = wk.hist[b * width + k]
                nb += 1
        return nb
    for p in range(start, end):
        wk.pairs[p - start].code = codes[samp[p], f]
        wk.pairs[p - start].pos = p
    qsort(wk.pairs, m, sizeof(CodePos), cmp_codepos)
    nb = -1
    c = -1
    for p in range(m):
        i = samp[wk.pairs[p].pos]
        if wk.pairs[p].code != c:
            c = wk.pairs[p].code
            nb += 1
            wk.bin_code[nb] = c
            for k in range(width):
                wk.bin_val[nb * width + k] = 0.0
        w = weights[i]
        if crit == GINI:
            wk.bin_val[nb * width + y[i]] += w
        else:
            wk.bin_val[nb * width] += w
            wk.bin_val[nb * width + 1] += w * target[i]
    return nb + 1


cdef double scan_bins(int64_t nb, int crit, int64_t K, double min_leaf, Work* wk,
                      int64_t* best_pos) noexcept nogil:
    """Best boundary among compacted bins; returns score (-1 if none valid)."""
    cdef int64_t b, k
    cdef double wl, wt, wr, a, bb, score, best = -1.0, bw, sl, st, sr, cr
    best_pos[0] = -1
    if crit == GINI:
        # totals: cumulative over all bins, started from bin 0
        for k in range(K):
            wk.tot[k] = wk.bin_val[k]
        wt = wk.bin_val[0]
        for k in range(1, K):
            wt = wt + wk.bin_val[k]
        for b in range(1, nb):
            bw = wk.bin_val[b * K]
            for k in range(1, K):
                bw = bw + wk.bin_val[b * K + k]
            wt = wt + bw
            for k in range(K):
                wk.tot[k] = wk.tot[k] + wk.bin_val[b * K + k]
        for k in range(K):
            wk.cl[k] = wk.bin_val[k]
        wl = wk.bin_val[0]
        for k in range(1, K):
            wl = wl + wk.bin_val[k]
        for b in range(nb - 1):
            if b > 0:
                bw = wk.bin_val[b * K]
                for k in range(1, K):
                    bw = bw + wk.bin_val[b * K + k]
                wl = wl + bw
                for k in range(K):
                    wk.cl[k] = wk.cl[k] + wk.bin_val[b * K + k]
            wr = wt - wl
            if wl >= min_leaf and wr >= min_leaf:
                a = wk.cl[0] * wk.cl[0]
                cr = wk.tot[0] - wk.cl[0]
                bb = cr * cr
                for k in range(1, K):
                    a = a + wk.cl[k] * wk.cl[k]
                    cr = wk.tot[k] - wk.cl[k]
                    bb = bb + cr * cr
                score = (a * wr + bb * wl) / (wl * wr)
                if best_pos[0] < 0 or score > best:
                    best = score
                    best_pos[0] = b
        return best
    wt = wk.bin_val[0]
    st = wk.bin_val[1]
    for b in range(1, nb):
        wt = wt + wk.bin_val[2 * b]
        st = st + wk.bin_val[2 * b + 1]
    wl = wk.bin_val[0]
    sl = wk.bin_val[1]
    for b in range(nb - 1):
        if b > 0:
            wl = wl + wk.bin_val[2 * b]
            sl = sl + wk.bin_val[2 * b + 1]
        wr = wt - wl
        if wl >= min_leaf and wr >= min_leaf:
            sr = st - sl
            score = (sl * sl * wr + sr * sr * wl) / (wl * wr)
            if best_pos[0] < 0 or score > best:
                best = score
                best_pos[0] = b
    return best


def build_tree(const int32_t[:, ::1] codes, const int64_t[::1] n_bins,
               const double[::1] values, const int64_t[::1] offsets,
               const int64_t[::1] y, int64_t n_classes, const double[::1] target,
               const double[::1] weights, int criterion, int64_t max_depth,
               double min_samples_split, double min_samples_leaf, int64_t max_features,
               uint64_t seed):
    cdef int64_t n = codes.shape[0], d = codes.shape[1]
    cdef int64_t K = n_classes
    cdef int crit = criterion
    cdef int64_t i, m = 0, max_nb = 0, f, width
    for i in range(n):
        if weights[i] > 0:
            m += 1
    for f in range(d):
        if n_bins[f] > max_nb:
            max_nb = n_bins[f]
    width = K if crit == GINI else 2
    cdef int64_t cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    decrease = np.zeros(cap, dtype=np.float64)
    node_w = np.zeros(cap, dtype=np.float64)
    leaf_of = np.full(n, -1, dtype=np.int64)
    cdef int64_t[::1] feature_v = feature, left_v = left, right_v = right, leaf_v = leaf_of
    cdef double[::1] thr_v = threshold, dec_v = decrease, nw_v = node_w

    cdef int64_t* samp = <int64_t*>malloc((m + 1) * sizeof(int64_t))
    cdef int64_t* tmp = <int64_t*>malloc((m + 1) * sizeof(int64_t))
    cdef Frame* stack = <Frame*>malloc((cap + 1) * sizeof(Frame))
    cdef int64_t* perm = <int64_t*>malloc((d + 1) * sizeof(int64_t))
    cdef double* counts = <double*>malloc((K + 1) * sizeof(double))
    cdef Work wk
    wk.bin_code = <int64_t*>malloc((max_nb + 1) * sizeof(int64_t))
    wk.bin_val = <double*>malloc((max_nb + 1) * width * sizeof(double))
    wk.hist = <double*>malloc((max_nb + 1) * width * sizeof(double))
    wk.hist_cnt = <int64_t*>malloc((max_nb + 1) * sizeof(int64_t))
    wk.pairs = <CodePos*>malloc((m + 1) * sizeof(CodePos))
    wk.cl = <double*>malloc((K + 1) * sizeof(double))
    wk.tot = <double*>malloc((K + 1) * sizeof(double))
    if (samp == NULL or tmp == NULL or stack == NULL or perm == NULL or counts == NULL
            or wk.bin_code == NULL or wk.bin_val == NULL or wk.hist == NULL
            or wk.hist_cnt == NULL or wk.pairs == NULL or wk.cl == NULL or wk.tot == NULL):
        free(samp); free(tmp); free(stack); free(perm); free(counts)
        free(wk.bin_code); free(wk.bin_val); free(wk.hist); free(wk.hist_cnt)
        free(wk.pairs); free(wk.cl); free(wk.tot)
        raise MemoryError()

    cdef int64_t sp = 0, n_nodes = 0, nid, p, k, j, tmpi, start, end, depth, visited
    cdef int64_t nb, pos, best_f, best_a, best_b, n_left, n_right, code_a, nclass
    cdef uint64_t key, state, r
    cdef Frame fr
    cdef double w_node, parent_score, sq, s, rmin, rmax, score, best_score, va, vb, thr
    cdef bint pure, found
    try:
        with nogil:
            j = 0
            for i in range(n):
                if weights[i] > 0:
                    samp[j] = i
                    j += 1
            stack[0].start = 0
            stack[0].end = m
            stack[0].depth = 0
            stack[0].key = seed
            stack[0].parent = -1
            stack[0].side = 0
            sp = 1
            while sp > 0:
                sp -= 1
                fr = stack[sp]
                start = fr.start
                end = fr.end
                depth = fr.depth
                key = fr.key
                nid = n_nodes
                n_nodes += 1
                if fr.parent >= 0:
                    if fr.side == 1:
                        left_v[fr.parent] = nid
                    else:
                        right_v[fr.parent] = nid
                # node statistics
                if crit == GINI:
                    for k in range(K):
                        counts[k] = 0.0
                    for p in range(start, end):
                        i = samp[p]
                        counts[y[i]] += weights[i]
                    w_node = 0.0
                    sq = 0.0
                    nclass = 0
                    for k in range(K):
                        w_node = w_node + counts[k]
                        sq = sq + counts[k] * counts[k]
                        if counts[k] > 0:
                            nclass += 1
                    parent_score = sq / w_node
                    pure = nclass <= 1
                else:
                    w_node = 0.0
                    s = 0.0
                    i = samp[start]
                    rmin = target[i]
                    rmax = target[i]
                    for p in range(start, end):
                        i = samp[p]
                        w_node = w_node + weights[i]
                        s = s + weights[i] * target[i]
                        if target[i] < rmin:
                            rmin = target[i]
                        if target[i] > rmax:
                            rmax = target[i]
                    parent_score = s * s / w_node
                    pure = rmin == rmax
                nw_v[nid] = w_node
                if depth >= max_depth or w_node < min_samples_split or pure:
                    for p in range(start, end):
                        leaf_v[samp[p]] = nid
                    continue
                # candidate order
                for f in range(d):
                    perm[f] = f
                if max_features < d:
                    state = key
                    for f in range(d - 1, 0, -1):
                        state = state + GOLDEN
                        r = mix64(state)
                        j = <int64_t>(r % <uint64_t>(f + 1))
                        tmpi = perm[f]
                        perm[f] = perm[j]
                        perm[j] = tmpi
                found = False
                best_score = 0.0
                best_f = -1
                best_a = -1
                best_b = -1
                visited = 0
                for j in range(d):
                    f = perm[j]
                    nb = gather_bins(codes, f, n_bins[f], samp, start, end, y, target,
                                     weights, crit, K, &wk)
                    if nb < 2:
                        continue
                    visited += 1
                    score = scan_bins(nb, crit, K, min_samples_leaf, &wk, &pos)
                    if pos >= 0 and (not found or score > best_score
                                     or (score == best_score and f < best_f)):
                        found = True
                        best_score = score
                        best_f = f
                        best_a = wk.bin_code[pos]
                        best_b = wk.bin_code[pos + 1]
                    if visited >= max_features:
                        break
                if not found:
                    for p in range(start, end):
                        leaf_v[samp[p]] = nid
                    continue
                va = values[offsets[best_f] + best_a]
                vb = values[offsets[best_f] + best_b]
                thr = (va + vb) * 0.5
                if thr >= vb:
                    thr = va
                feature_v[nid] = best_f
                thr_v[nid] = thr
                score = best_score - parent_score
                dec_v[nid] = score if score > 0.0 else 0.0
                # stable partition
                n_left = 0
                for p in range(start, end):
                    if codes[samp[p], best_f] <= best_a:
                        tmp[start + n_left] = samp[p]
                        n_left += 1
                n_right = 0
                for p in range(start, end):
                    if codes[samp[p], best_f] > best_a:
                        tmp[start + n_left + n_right] = samp[p]
                        n_right += 1
                for p in range(start, end):
                    samp[p] = tmp[p]
                stack[sp].start = start + n_left
                stack[sp].end = end
                stack[sp].depth = depth + 1
                stack[sp].key = child_key(key, 2)
                stack[sp].parent = nid
                stack[sp].side = 2
                sp += 1
                stack[sp].start = start
                stack[sp].end = start + n_left
                stack[sp].depth = depth + 1
                stack[sp].key = child_key(key, 1)
                stack[sp].parent = nid
                stack[sp].side = 1
                sp += 1
    finally:
        free(samp); free(tmp); free(stack); free(perm); free(counts)
        free(wk.bin_code); free(wk.bin_val); free(wk.hist); free(wk.hist_cnt)
        free(wk.pairs); free(wk.cl); free(wk.tot)
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), decrease[:n_nodes].copy(), node_w[:n_nodes].copy(),
            leaf_of)


def apply_tree(const int64_t[::1] feature, const double[::1] threshold,
               const int64_t[::1] left, const int64_t[::1] right, X):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef int64_t n = Xv.shape[0], i, node
    out = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] ov = out
    with nogil:
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if Xv[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            ov[i] = node
    return out


def build_itree(Xs, int64_t height_limit, uint64_t key):
    cdef const double[:, ::1] X = np.ascontiguousarray(Xs, dtype=np.float64)
    cdef int64_t m = X.shape[0], d = X.shape[1]
    cdef int64_t cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    size = np.zeros(cap, dtype=np.int64)
    depth_arr = np.zeros(cap, dtype=np.int64)
    cdef int64_t[::1] fv = feature, lv = left, rv = right, sv = size, dv = depth_arr
    cdef double[::1] tv = threshold
    cdef int64_t* samp = <int64_t*>malloc((m + 1) * sizeof(int64_t))
    cdef int64_t* tmp = <int64_t*>malloc((m + 1) * sizeof(int64_t))
    cdef Frame* stack = <Frame*>malloc((cap + 1) * sizeof(Frame))
    cdef double* lo = <double*>malloc((d + 1) * sizeof(double))
    cdef double* hi = <double*>malloc((d + 1) * sizeof(double))
    cdef int64_t* spread = <int64_t*>malloc((d + 1) * sizeof(int64_t))
    if samp == NULL or tmp == NULL or stack == NULL or lo == NULL or hi == NULL or spread == NULL:
        free(samp); free(tmp); free(stack); free(lo); free(hi); free(spread)
        raise MemoryError()
    cdef int64_t sp, n_nodes = 0, nid, p, i, j, ns, start, end, depth, n_left, n_right
    cdef uint64_t k
    cdef double u, v, x
    cdef Frame fr
    try:
        with nogil:
            for i in range(m):
                samp[i] = i
            stack[0].start = 0
            stack[0].end = m
            stack[0].depth = 0
            stack[0].key = key
            stack[0].parent = -1
            stack[0].side = 0
            sp = 1
            while sp > 0:
                sp -= 1
                fr = stack[sp]
                start = fr.start
                end = fr.end
                depth = fr.depth
                k = fr.key
                nid = n_nodes
                n_nodes += 1
                sv[nid] = end - start
                dv[nid] = depth
                if fr.parent >= 0:
                    if fr.side == 1:
                        lv[fr.parent] = nid
                    else:
                        rv[fr.parent] = nid
                if depth >= height_limit or end - start <= 1:
                    continue
                for j in range(d):
                    lo[j] = X[samp[start], j]
                    hi[j] = X[samp[start], j]
                for p in range(start + 1, end):
                    i = samp[p]
                    for j in range(d):
                        x = X[i, j]
                        if x < lo[j]:
                            lo[j] = x
                        elif x > hi[j]:
                            hi[j] = x
                ns = 0
                for j in range(d):
                    if lo[j] < hi[j]:
                        spread[ns] = j
                        ns += 1
                if ns == 0:
                    continue
                j = spread[mix64(k ^ FEATURE_SALT) % <uint64_t>ns]
                u = unit_interval(mix64(k ^ SPLIT_SALT))
                v = lo[j] + u * (hi[j] - lo[j])
                if v <= lo[j]:
                    v = hi[j]
                fv[nid] = j
                tv[nid] = v
                n_left = 0
                for p in range(start, end):
                    if X[samp[p], j] < v:
                        tmp[start + n_left] = samp[p]
                        n_left += 1
                n_right = 0
                for p in range(start, end):
                    if not (X[samp[p], j] < v):
                        tmp[start + n_left + n_right] = samp[p]
                        n_right += 1
                for p in range(start, end):
                    samp[p] = tmp[p]
                stack[sp].start = start + n_left
                stack[sp].end = end
                stack[sp].depth = depth + 1
                stack[sp].key = child_key(k, 2)
                stack[sp].parent = nid
                stack[sp].side = 2
                sp += 1
                stack[sp].start = start
                stack[sp].end = start + n_left
                stack[sp].depth = depth + 1
                stack[sp].key = child_key(k, 1)
                stack[sp].parent = nid
                stack[sp].side = 1
                sp += 1
    finally:
        free(samp); free(tmp); free(stack); free(lo); free(hi); free(spread)
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), size[:n_nodes].copy(), depth_arr[:n_nodes].copy())


def forest_path_length(const int64_t[::1] feature, const double[::1] threshold,
                       const int64_t[::1] left, const int64_t[::1] right,
                       const double[::1] terminal, const int64_t[::1] tree_offsets, X):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef int64_t n = Xv.shape[0], n_trees = tree_offsets.shape[0] - 1, i, t, off, node
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for t in range(n_trees):
                off = tree_offsets[t]
                node = 0
                while feature[off + node] >= 0:
                    if Xv[i, feature[off + node]] < threshold[off + node]:
                        node = left[off + node]
                    else:
                        node = right[off + node]
                acc = acc + terminal[off + node]
            ov[i] = acc
    return out
