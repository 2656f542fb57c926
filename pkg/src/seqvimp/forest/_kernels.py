"""Compiled CART growing, prediction and out-of-bag importance loops.

Trees are stored in flat per-forest arrays indexed ``[tree, node]``.  A node
with ``feature < 0`` is a leaf.  Numeric splits send ``x <= threshold`` left;
categorical splits send level ``c`` left when bit ``c`` of ``catmask`` is set.

Every tree reseeds numba's generator from its own seed, so a tree's bootstrap
draw, split candidates and OOB permutations depend only on that seed.
"""

import numpy as np
from numba import njit

REGRESSION = 0
CLASSIFICATION = 1

LOSS_SQUARED = 0
LOSS_BRIER = 1
LOSS_MISCLASS = 2

MAX_SUBSET_LEVELS = 10
SMALL_NODE_ROWS = 16
# scores within this relative margin count as tied; the earlier candidate
# (lower feature index, then lower threshold) keeps the split
TIE_RTOL = 1e-10


@njit(cache=True)
def _score(task, sl, nl, sr, nr, cl, cr, n_out):
    # larger is better; equals the negated weighted child impurity up to a node constant
    if task == REGRESSION:
        return sl * sl / nl + sr * sr / nr
    a = 0.0
    b = 0.0
    for c in range(n_out):
        a += cl[c] * cl[c]
        b += cr[c] * cr[c]
    return a / nl + b / nr


@njit(cache=True)
def _best_numeric(X, y, w, order_f, sorted_f, node_of, node, f, task, n_out, min_node, cnt, st,
                  cl, cr, tot, best_score, small, idx, start, end):
    found = False
    best_thr = 0.0
    sl = 0.0
    nl = 0.0
    for c in range(n_out):
        cl[c] = 0.0
    have_prev = False
    prev = 0.0
    if small:
        # few distinct rows: sort them directly instead of scanning the global order
        k = end - start
        vals = np.empty(k)
        for i in range(k):
            vals[i] = X[idx[start + i], f]
        loc = np.argsort(vals)
        n_iter = k
    else:
        vals = np.empty(0)
        loc = np.empty(0, dtype=np.int64)
        n_iter = order_f.shape[0]
    for it in range(n_iter):
        if small:
            r = idx[start + loc[it]]
            v = vals[loc[it]]
        else:
            r = order_f[it]
            if node_of[r] != node:
                continue
            v = sorted_f[it]
        if have_prev and v != prev:
            nr = cnt - nl
            if nl >= min_node and nr >= min_node:
                if task == CLASSIFICATION:
                    for c in range(n_out):
                        cr[c] = tot[c] - cl[c]
                sc = _score(task, sl, nl, st - sl, nr, cl, cr, n_out)
                if sc > best_score + TIE_RTOL * abs(best_score):
                    best_score = sc
                    thr = 0.5 * (prev + v)
                    if thr >= v:
                        thr = prev
                    best_thr = thr
                    found = True
        wr = w[r]
        nl += wr
        if task == REGRESSION:
            sl += wr * y[r]
        else:
            cl[int(y[r])] += wr
        prev = v
        have_prev = True
    return found, best_score, best_thr


@njit(cache=True)
def _best_categorical(X, y, w, idx, start, end, f, n_lev, task, n_out, min_node, cnt, st,
                      cl, cr, tot, best_score):
    lcnt = np.zeros(n_lev)
    ysum = np.zeros(n_lev)
    cls = np.zeros((n_lev, n_out))
    for i in range(start, end):
        r = idx[i]
        lev = int(X[r, f])
        wr = w[r]
        lcnt[lev] += wr
        if task == REGRESSION:
            ysum[lev] += wr * y[r]
        else:
            cls[lev, int(y[r])] += wr
    present = np.empty(n_lev, dtype=np.int64)
    n_p = 0
    for lev in range(n_lev):
        if lcnt[lev] > 0:
            present[n_p] = lev
            n_p += 1
    found = False
    best_mask = np.int64(0)
    if n_p < 2:
        return found, best_score, best_mask

    if n_p <= MAX_SUBSET_LEVELS:
        # every bipartition once: the last present level always goes right
        n_sub = (1 << (n_p - 1)) - 1
        for sub in range(1, n_sub + 1):
            nl = 0.0
            sl = 0.0
            for c in range(n_out):
                cl[c] = 0.0
            mask = np.int64(0)
            for q in range(n_p - 1):
                if (sub >> q) & 1:
                    lev = present[q]
                    mask |= np.int64(1) << np.int64(lev)
                    nl += lcnt[lev]
                    if task == REGRESSION:
                        sl += ysum[lev]
                    else:
                        for c in range(n_out):
                            cl[c] += cls[lev, c]
            nr = cnt - nl
            if nl < min_node or nr < min_node:
                continue
            if task == CLASSIFICATION:
                for c in range(n_out):
                    cr[c] = tot[c] - cl[c]
            sc = _score(task, sl, nl, st - sl, nr, cl, cr, n_out)
            if sc > best_score + TIE_RTOL * abs(best_score):
                best_score = sc
                best_mask = mask
                found = True
        return found, best_score, best_mask

    # many levels: order by mean outcome (class-1 share) and scan prefixes
    key = np.empty(n_p)
    for q in range(n_p):
        lev = present[q]
        if task == REGRESSION:
            key[q] = ysum[lev] / lcnt[lev]
        else:
            key[q] = cls[lev, 1 if n_out > 1 else 0] / lcnt[lev]
    order = np.argsort(key, kind="mergesort")
    nl = 0.0
    sl = 0.0
    for c in range(n_out):
        cl[c] = 0.0
    mask = np.int64(0)
    for q in range(n_p - 1):
        lev = present[order[q]]
        mask |= np.int64(1) << np.int64(lev)
        nl += lcnt[lev]
        if task == REGRESSION:
            sl += ysum[lev]
        else:
            for c in range(n_out):
                cl[c] += cls[lev, c]
        nr = cnt - nl
        if nl < min_node or nr < min_node:
            continue
        if task == CLASSIFICATION:
            for c in range(n_out):
                cr[c] = tot[c] - cl[c]
        sc = _score(task, sl, nl, st - sl, nr, cl, cr, n_out)
        if sc > best_score + TIE_RTOL * abs(best_score):
            best_score = sc
            best_mask = mask
            found = True
    return found, best_score, best_mask


@njit(cache=True)
def _goes_left(X, r, f, is_cat_f, thr, mask):
    if is_cat_f:
        return (mask >> np.int64(int(X[r, f]))) & 1 == 1
    return X[r, f] <= thr


@njit(cache=True)
def _grow(X, y, is_cat, n_levels, order, sorted_x, w, mtry, min_node, task, n_out,
          feature, threshold, catmask, left, right, value):
    """Grow one tree on rows weighted by bootstrap multiplicity ``w``; returns node count."""
    n, n_feat = X.shape
    cap = feature.shape[0]
    idx = np.empty(n, dtype=np.int64)
    node_of = np.full(n, -1, dtype=np.int64)
    n_in = 0
    for r in range(n):
        if w[r] > 0:
            idx[n_in] = r
            node_of[r] = 0
            n_in += 1
    stack_node = np.empty(cap, dtype=np.int64)
    stack_start = np.empty(cap, dtype=np.int64)
    stack_end = np.empty(cap, dtype=np.int64)
    feats = np.arange(n_feat)
    cand = np.empty(mtry, dtype=np.int64)
    cl = np.zeros(n_out)
    cr = np.zeros(n_out)
    tot = np.zeros(n_out)
    tmp = np.empty(n, dtype=np.int64)
    small_cut = SMALL_NODE_ROWS

    n_nodes = 1
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n_in
    top = 1
    while top > 0:
        top -= 1
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        feature[node] = -1
        left[node] = -1
        right[node] = -1

        # weighted size, outcome sum / class totals, purity
        cnt = 0.0
        st = 0.0
        for c in range(n_out):
            tot[c] = 0.0
        pure = True
        y0 = y[idx[start]]
        for i in range(start, end):
            r = idx[i]
            wr = w[r]
            cnt += wr
            if task == REGRESSION:
                st += wr * y[r]
            else:
                tot[int(y[r])] += wr
            if y[r] != y0:
                pure = False
        val = value[node]
        if task == REGRESSION:
            val[0] = st / cnt
            parent = st * st / cnt
        else:
            parent = 0.0
            for c in range(n_out):
                val[c] = tot[c] / cnt
                parent += tot[c] * tot[c]
            parent /= cnt
        if pure or cnt < 2 * min_node or cnt < 2 or n_nodes + 2 > cap:
            continue

        # mtry distinct candidates by partial Fisher-Yates, tried in ascending order
        for q in range(mtry):
            rr = q + np.random.randint(0, n_feat - q)
            t = feats[q]
            feats[q] = feats[rr]
            feats[rr] = t
        for q in range(mtry):
            cand[q] = feats[q]
        cand.sort()

        small = (end - start) <= small_cut
        best = parent + TIE_RTOL * abs(parent)
        best_f = -1
        best_thr = 0.0
        best_mask = np.int64(0)
        for q in range(mtry):
            f = cand[q]
            if is_cat[f]:
                ok, sc, mk = _best_categorical(X, y, w, idx, start, end, f, n_levels[f], task,
                                               n_out, min_node, cnt, st, cl, cr, tot, best)
                if ok:
                    best = sc
                    best_f = f
                    best_mask = mk
            else:
                ok, sc, th = _best_numeric(X, y, w, order[f], sorted_x[f], node_of, node, f, task, n_out,
                                           min_node, cnt, st, cl, cr, tot, best, small,
                                           idx, start, end)
                if ok:
                    best = sc
                    best_f = f
                    best_thr = th
        if best_f < 0:
            continue

        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        cat_f = is_cat[best_f]
        nl = 0
        for i in range(start, end):
            r = idx[i]
            if _goes_left(X, r, best_f, cat_f, best_thr, best_mask):
                tmp[nl] = r
                nl += 1
                node_of[r] = lnode
        k = nl
        for i in range(start, end):
            r = idx[i]
            if node_of[r] != lnode:
                tmp[k] = r
                k += 1
                node_of[r] = rnode
        for i in range(end - start):
            idx[start + i] = tmp[i]

        feature[node] = best_f
        threshold[node] = best_thr
        catmask[node] = best_mask
        left[node] = lnode
        right[node] = rnode
        stack_node[top] = rnode
        stack_start[top] = start + nl
        stack_end[top] = end
        top += 1
        stack_node[top] = lnode
        stack_start[top] = start
        stack_end[top] = start + nl
        top += 1
    return n_nodes


@njit(cache=True)
def fit_forest_kernel(X, y, is_cat, n_levels, seeds, boot, mtry, min_node, task, n_out):
    """Grow ``len(seeds)`` trees.

    ``boot`` is either an empty (0, 0) array, in which case each tree draws its
    own bootstrap sample after seeding, or a (T, n) array of row indices.
    """
    n, p = X.shape
    T = seeds.shape[0]
    cap = 2 * n + 1
    feature = np.full((T, cap), -1, dtype=np.int64)
    threshold = np.zeros((T, cap))
    catmask = np.zeros((T, cap), dtype=np.int64)
    left = np.full((T, cap), -1, dtype=np.int64)
    right = np.full((T, cap), -1, dtype=np.int64)
    value = np.zeros((T, cap, n_out))
    n_nodes = np.zeros(T, dtype=np.int64)
    inbag = np.zeros((T, n), dtype=np.int32)
    order = np.empty((p, n), dtype=np.int64)
    sorted_x = np.empty((p, n))
    for f in range(p):
        order[f] = np.argsort(X[:, f], kind="mergesort")
        for i in range(n):
            sorted_x[f, i] = X[order[f, i], f]
    use_given = boot.shape[0] == T
    w = np.empty(n)
    for t in range(T):
        np.random.seed(seeds[t])
        if use_given:
            for i in range(n):
                inbag[t, boot[t, i]] += 1
        else:
            for i in range(n):
                inbag[t, np.random.randint(0, n)] += 1
        for i in range(n):
            w[i] = inbag[t, i]
        n_nodes[t] = _grow(X, y, is_cat, n_levels, order, sorted_x, w, mtry, min_node, task, n_out,
                           feature[t], threshold[t], catmask[t], left[t], right[t], value[t])
    return feature, threshold, catmask, left, right, value, n_nodes, inbag


@njit(cache=True)
def _leaf(feature, threshold, catmask, left, right, is_cat, X, i, j, xj):
    # xj replaces X[i, j] during descent (j < 0 disables the override)
    node = 0
    while feature[node] >= 0:
        f = feature[node]
        v = xj if f == j else X[i, f]
        if is_cat[f]:
            if (catmask[node] >> np.int64(int(v))) & 1:
                node = left[node]
            else:
                node = right[node]
        elif v <= threshold[node]:
            node = left[node]
        else:
            node = right[node]
    return node


@njit(cache=True)
def _loss(pred, y_i, task, loss, n_out):
    if loss == LOSS_SQUARED:
        d = y_i - pred[0]
        return d * d
    c_true = int(y_i)
    if loss == LOSS_BRIER:
        s = 0.0
        for c in range(n_out):
            d = pred[c] - (1.0 if c == c_true else 0.0)
            s += d * d
        return s
    best = 0
    for c in range(1, n_out):
        if pred[c] > pred[best]:
            best = c
    return 0.0 if best == c_true else 1.0


@njit(cache=True)
def predict_kernel(feature, threshold, catmask, left, right, value, is_cat, X):
    """Per-tree predictions, shape (T, n, n_out)."""
    T = feature.shape[0]
    n = X.shape[0]
    n_out = value.shape[2]
    out = np.empty((T, n, n_out))
    for t in range(T):
        for i in range(n):
            node = _leaf(feature[t], threshold[t], catmask[t], left[t], right[t], is_cat, X, i, -1, 0.0)
            for c in range(n_out):
                out[t, i, c] = value[t, node, c]
    return out


@njit(cache=True)
def tree_vi_kernel(feature, threshold, catmask, left, right, value, is_cat, inbag,
                   X, y, j, nperm, seeds, task, loss):
    """Per-tree OOB importance of column ``j``; NaN for trees without OOB rows."""
    T = feature.shape[0]
    n = X.shape[0]
    n_out = value.shape[2]
    vi = np.full(T, np.nan)
    oob = np.empty(n, dtype=np.int64)
    for t in range(T):
        n_oob = 0
        for i in range(n):
            if inbag[t, i] == 0:
                oob[n_oob] = i
                n_oob += 1
        if n_oob == 0:
            continue
        used = False
        for node in range(feature.shape[1]):
            if feature[t, node] == j:
                used = True
                break
        if not used:
            vi[t] = 0.0
            continue
        np.random.seed(seeds[t])
        base = 0.0
        for q in range(n_oob):
            i = oob[q]
            node = _leaf(feature[t], threshold[t], catmask[t], left[t], right[t], is_cat, X, i, -1, 0.0)
            base += _loss(value[t, node], y[i], task, loss, n_out)
        base /= n_oob
        perm_total = 0.0
        src = np.empty(n_oob, dtype=np.int64)
        for r in range(nperm):
            for q in range(n_oob):
                src[q] = oob[q]
            for q in range(n_oob - 1, 0, -1):
                w = np.random.randint(0, q + 1)
                tmp = src[q]
                src[q] = src[w]
                src[w] = tmp
            s = 0.0
            for q in range(n_oob):
                i = oob[q]
                node = _leaf(feature[t], threshold[t], catmask[t], left[t], right[t], is_cat,
                             X, i, j, X[src[q], j])
                s += _loss(value[t, node], y[i], task, loss, n_out)
            perm_total += s / n_oob
        vi[t] = perm_total / nperm - base
    return vi
