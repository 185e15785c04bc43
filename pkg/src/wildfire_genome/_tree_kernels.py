"""Compiled kernels for tree construction and prediction.

Random numbers come from splitmix64, seeded once per tree, so a tree depends
only on its own seed and the training data: serial and threaded fits give
identical forests.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def next_u64(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def rand_below(state, n):
    u = next_u64(state) >> np.uint64(11)
    k = np.int64(np.float64(u) * _INV_2_53 * n)
    return k if k < n else n - 1


@njit(cache=True, nogil=True)
def bootstrap_counts(state, n):
    w = np.zeros(n, dtype=np.int64)
    for _ in range(n):
        w[rand_below(state, n)] += 1
    return w


@njit(cache=True, nogil=True)
def _best_split_on(X, y, w, idx, start, end, f, n_classes, min_leaf, total, cls_total,
                   vals, order, cl, best):
    """Scan one feature; update ``best`` = [score, feature, threshold, found] in place."""
    m = end - start
    for k in range(m):
        vals[k] = X[idx[start + k], f]
    o = np.argsort(vals[:m])
    for k in range(m):
        order[k] = o[k]
    for c in range(n_classes):
        cl[c] = 0
    wl = 0
    sq_l = 0
    sq_r = 0
    for c in range(n_classes):
        sq_r += cls_total[c] * cls_total[c]
    for k in range(m - 1):
        r = idx[start + order[k]]
        wt = w[r]
        c = y[r]
        cr = cls_total[c] - cl[c]
        sq_l += 2 * cl[c] * wt + wt * wt
        sq_r += -2 * cr * wt + wt * wt
        cl[c] += wt
        wl += wt
        v0 = vals[order[k]]
        v1 = vals[order[k + 1]]
        if v0 >= v1:
            continue
        wr = total - wl
        if wl < min_leaf or wr < min_leaf:
            continue
        score = sq_l / wl + sq_r / wr
        if best[3] == 0.0 or score > best[0]:
            thr = 0.5 * (v0 + v1)
            if thr >= v1:
                thr = v0
            best[0] = score
            best[1] = f
            best[2] = thr
            best[3] = 1.0


@njit(cache=True, nogil=True)
def build_tree(X, y, w, n_classes, max_depth, min_samples_leaf, max_features, state):
    """Grow one CART classification tree (Gini) on weighted rows.

    ``w`` holds integer bootstrap multiplicities; rows with w == 0 are absent.
    ``max_depth`` < 0 means unlimited. Returns node arrays
    (feature, threshold, left, right, coverage, class_counts).
    """
    n_features = X.shape[1]
    n_present = 0
    for i in range(w.shape[0]):
        if w[i] > 0:
            n_present += 1
    idx = np.empty(n_present, dtype=np.int64)
    k = 0
    for i in range(w.shape[0]):
        if w[i] > 0:
            idx[k] = i
            k += 1

    cap = 2 * n_present + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    coverage = np.zeros(cap, dtype=np.int64)
    counts = np.zeros((cap, n_classes), dtype=np.int64)

    vals = np.empty(n_present, dtype=np.float64)
    order = np.empty(n_present, dtype=np.int64)
    tmp = np.empty(n_present, dtype=np.int64)
    cl = np.zeros(n_classes, dtype=np.int64)
    cls_total = np.zeros(n_classes, dtype=np.int64)
    perm = np.empty(n_features, dtype=np.int64)
    cand = np.empty(n_features, dtype=np.int64)
    best = np.zeros(4, dtype=np.float64)

    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    sp = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_present
    st_depth[0] = 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]

        for c in range(n_classes):
            cls_total[c] = 0
        total = 0
        for k in range(start, end):
            r = idx[k]
            cls_total[y[r]] += w[r]
            total += w[r]
        coverage[node] = total
        n_nonzero = 0
        for c in range(n_classes):
            counts[node, c] = cls_total[c]
            if cls_total[c] > 0:
                n_nonzero += 1

        if n_nonzero <= 1 or (max_depth >= 0 and depth >= max_depth) \
                or total < 2 * min_samples_leaf or end - start < 2:
            continue

        for j in range(n_features):
            perm[j] = j
        for j in range(max_features):
            s = j + rand_below(state, n_features - j)
            t = perm[j]
            perm[j] = perm[s]
            perm[s] = t

        best[0] = 0.0
        best[1] = -1.0
        best[2] = 0.0
        best[3] = 0.0
        # drawn candidates first (ascending index); remaining features only if none splits
        for phase in range(2):
            lo = 0 if phase == 0 else max_features
            hi = max_features if phase == 0 else n_features
            nc = hi - lo
            for j in range(nc):
                cand[j] = perm[lo + j]
            cand[:nc].sort()
            for j in range(nc):
                _best_split_on(X, y, w, idx, start, end, cand[j], n_classes, min_samples_leaf,
                               total, cls_total, vals, order, cl, best)
            if best[3] != 0.0:
                break
        if best[3] == 0.0:
            continue

        f = np.int64(best[1])
        thr = best[2]
        nl = 0
        nr = 0
        for k in range(start, end):
            r = idx[k]
            if X[r, f] <= thr:
                idx[start + nl] = r
                nl += 1
            else:
                tmp[nr] = r
                nr += 1
        for k in range(nr):
            idx[start + nl + k] = tmp[k]

        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        feature[node] = f
        threshold[node] = thr
        left[node] = lc
        right[node] = rc
        # push right first so the left subtree is grown first
        st_node[sp] = rc
        st_start[sp] = start + nl
        st_end[sp] = end
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lc
        st_start[sp] = start
        st_end[sp] = start + nl
        st_depth[sp] = depth + 1
        sp += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), coverage[:n_nodes].copy(), counts[:n_nodes].copy())


@njit(cache=True, nogil=True)
def fit_one(X, y, n_classes, max_depth, min_samples_leaf, max_features, seed, bootstrap):
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    if bootstrap:
        w = bootstrap_counts(state, X.shape[0])
    else:
        w = np.ones(X.shape[0], dtype=np.int64)
    return build_tree(X, y, w, n_classes, max_depth, min_samples_leaf, max_features, state)


@njit(cache=True, nogil=True)
def apply_forest(X, feature, threshold, left, right, roots):
    """Leaf index reached by every row in every tree, shape (n, n_trees)."""
    n = X.shape[0]
    T = roots.shape[0]
    out = np.empty((n, T), dtype=np.int64)
    for i in range(n):
        for t in range(T):
            node = roots[t]
            while left[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i, t] = node
    return out


@njit(cache=True, nogil=True)
def predict_proba_forest(X, feature, threshold, left, right, value, roots):
    """Mean over trees of the leaf class distributions (summed in tree order)."""
    n = X.shape[0]
    T = roots.shape[0]
    C = value.shape[1]
    out = np.zeros((n, C), dtype=np.float64)
    for i in range(n):
        for t in range(T):
            node = roots[t]
            while left[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            for c in range(C):
                out[i, c] += value[node, c]
        for c in range(C):
            out[i, c] /= T
    return out


@njit(cache=True, nogil=True)
def ice_forest(X, sweep, grid, target, feature, threshold, left, right, value, roots):
    """ICE curves for one target class, shape (n, len(grid)).

    ``grid`` must be sorted ascending. Each tree is walked once per instance;
    at splits on the swept feature the grid is divided between both children.
    Per grid point, leaf values are summed in tree order and divided by the
    tree count, exactly as in :func:`predict_proba_forest`.
    """
    n = X.shape[0]
    G = grid.shape[0]
    T = roots.shape[0]
    out = np.zeros((n, G), dtype=np.float64)
    cap = 2 * (left.shape[0] + 1)
    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    for i in range(n):
        for t in range(T):
            sp = 0
            st_node[0] = roots[t]
            st_lo[0] = 0
            st_hi[0] = G
            sp = 1
            while sp > 0:
                sp -= 1
                node = st_node[sp]
                glo = st_lo[sp]
                ghi = st_hi[sp]
                while left[node] >= 0:
                    f = feature[node]
                    thr = threshold[node]
                    if f != sweep:
                        if X[i, f] <= thr:
                            node = left[node]
                        else:
                            node = right[node]
                        continue
                    # grid[glo:k] <= thr goes left
                    k = glo
                    while k < ghi and grid[k] <= thr:
                        k += 1
                    if k == glo:
                        node = right[node]
                    elif k == ghi:
                        node = left[node]
                    else:
                        st_node[sp] = right[node]
                        st_lo[sp] = k
                        st_hi[sp] = ghi
                        sp += 1
                        ghi = k
                        node = left[node]
                v = value[node, target]
                for g in range(glo, ghi):
                    out[i, g] += v
        for g in range(G):
            out[i, g] /= T
    return out
