"""Compiled path-dependent tree SHAP.

Each leaf contributes a product game over the distinct features on its path:
with ``o_f`` = 1 when x satisfies every split on f along the path and ``z_f``
the product of coverage ratios of those splits, the leaf's value function is
``value * prod_{f in S} o_f * prod_{f not in S} z_f``. Its Shapley value for
feature j is

    value * (o_j - z_j) * integral_0^1 prod_{f != j} (z_f + (o_f - z_f) t) dt,

a polynomial of degree |path| - 1 integrated exactly by Gauss-Legendre
quadrature with ceil(|path| / 2) nodes.
"""

import numpy as np
from numba import njit


def gauss_legendre_table(max_nodes):
    """Nodes and weights on [0, 1] for 1..max_nodes points, row q-1 padded with zeros."""
    t = np.zeros((max_nodes + 1, max(max_nodes, 1)))
    w = np.zeros_like(t)
    for q in range(1, max_nodes + 1):
        x, wx = np.polynomial.legendre.leggauss(q)
        t[q, :q] = 0.5 * (x + 1.0)
        w[q, :q] = 0.5 * wx
    return t, w


@njit(cache=True, nogil=True)
def _leaf_paths(node_lo, node_hi, feature, threshold, left, right, coverage, parent, n_features,
                gl_t, gl_w, qmax):
    """Per-leaf path data for one tree whose nodes are node_lo..node_hi-1.

    Returns (leaves, path_ptr, path_feat, path_lo, path_hi, path_z, a, b, r)
    with a/b/r shaped (n_entries, qmax): factor when o=1, factor when o=0,
    and (1-z) * w_q / a.
    """
    n_leaves = 0
    for node in range(node_lo, node_hi):
        if left[node] < 0:
            n_leaves += 1
    leaves = np.empty(n_leaves, dtype=np.int64)
    k = 0
    for node in range(node_lo, node_hi):
        if left[node] < 0:
            leaves[k] = node
            k += 1

    stamp = np.full(n_features, -1, dtype=np.int64)
    slot = np.zeros(n_features, dtype=np.int64)
    # first pass: count distinct features per path
    path_ptr = np.zeros(n_leaves + 1, dtype=np.int64)
    for li in range(n_leaves):
        m = 0
        node = leaves[li]
        while parent[node] >= 0:
            p = parent[node]
            f = feature[p]
            if stamp[f] != li:
                stamp[f] = li
                m += 1
            node = p
        path_ptr[li + 1] = path_ptr[li] + m

    n_ent = path_ptr[n_leaves]
    path_feat = np.empty(n_ent, dtype=np.int64)
    path_lo = np.empty(n_ent, dtype=np.float64)
    path_hi = np.empty(n_ent, dtype=np.float64)
    path_z = np.empty(n_ent, dtype=np.float64)
    stamp[:] = -1
    for li in range(n_leaves):
        base = path_ptr[li]
        m = 0
        node = leaves[li]
        while parent[node] >= 0:
            p = parent[node]
            f = feature[p]
            if stamp[f] != li:
                stamp[f] = li
                slot[f] = base + m
                path_feat[base + m] = f
                path_lo[base + m] = -np.inf
                path_hi[base + m] = np.inf
                path_z[base + m] = 1.0
                m += 1
            e = slot[f]
            path_z[e] *= coverage[node] / coverage[p]
            if left[p] == node:
                if threshold[p] < path_hi[e]:
                    path_hi[e] = threshold[p]
            else:
                if threshold[p] > path_lo[e]:
                    path_lo[e] = threshold[p]
            node = p

    a = np.zeros((n_ent, qmax))
    b = np.zeros((n_ent, qmax))
    r = np.zeros((n_ent, qmax))
    for li in range(n_leaves):
        m = path_ptr[li + 1] - path_ptr[li]
        nq = (m + 1) // 2
        for e in range(path_ptr[li], path_ptr[li + 1]):
            z = path_z[e]
            for q in range(nq):
                t = gl_t[nq, q]
                a[e, q] = z + (1.0 - z) * t
                b[e, q] = z * (1.0 - t)
                r[e, q] = (1.0 - z) * gl_w[nq, q] / a[e, q]
    return leaves, path_ptr, path_feat, path_lo, path_hi, path_z, a, b, r


@njit(cache=True, nogil=True)
def forest_shap(XT, feature, threshold, left, right, coverage, value, roots, parent, n_nodes_total,
                gl_t, gl_w, qmax, outT):
    """Accumulate the sum over trees of per-tree SHAP into outT[F, C, n].

    ``XT`` is the transposed chunk (features x instances); the innermost loops
    run over instances so they vectorize.
    """
    F, n = XT.shape
    C = value.shape[1]
    T = roots.shape[0]
    P = np.empty((qmax, n))
    o = np.empty((F, n))
    s0 = np.empty(n)
    coef = np.empty(n)
    u = np.empty((qmax + 1, qmax))
    for nq in range(1, qmax + 1):
        for q in range(nq):
            u[nq, q] = gl_w[nq, q] / (1.0 - gl_t[nq, q])
    for t in range(T):
        lo = roots[t]
        hi = roots[t + 1] if t + 1 < T else n_nodes_total
        leaves, ptr, pf, plo, phi, pz, a, b, r = _leaf_paths(
            lo, hi, feature, threshold, left, right, coverage, parent, F, gl_t, gl_w, qmax)
        for li in range(leaves.shape[0]):
            s = ptr[li]
            m = ptr[li + 1] - s
            if m == 0:
                continue
            nq = (m + 1) // 2
            leaf = leaves[li]
            for q in range(nq):
                P[q, :] = 1.0
            for k in range(m):
                e = s + k
                xf = XT[pf[e]]
                elo = plo[e]
                ehi = phi[e]
                ok = o[k]
                for i in range(n):
                    ok[i] = 1.0 if (xf[i] > elo and xf[i] <= ehi) else 0.0
                for q in range(nq):
                    aq = a[e, q]
                    bq = b[e, q]
                    d = aq - bq
                    Pq = P[q]
                    for i in range(n):
                        Pq[i] *= bq + d * ok[i]
            s0[:] = 0.0
            for q in range(nq):
                uq = u[nq, q]
                Pq = P[q]
                for i in range(n):
                    s0[i] += uq * Pq[i]
            for k in range(m):
                e = s + k
                coef[:] = 0.0
                for q in range(nq):
                    rq = r[e, q]
                    Pq = P[q]
                    for i in range(n):
                        coef[i] += rq * Pq[i]
                ok = o[k]
                for i in range(n):
                    coef[i] = coef[i] if ok[i] > 0.5 else -s0[i]
                f = pf[e]
                for c in range(C):
                    vc = value[leaf, c]
                    dst = outT[f, c]
                    for i in range(n):
                        dst[i] += coef[i] * vc


@njit(cache=True, nogil=True)
def forest_base_values(value, coverage, left, roots, n_nodes_total):
    """Sum over trees of the coverage-weighted mean leaf value."""
    C = value.shape[1]
    T = roots.shape[0]
    out = np.zeros(C)
    for t in range(T):
        lo = roots[t]
        hi = roots[t + 1] if t + 1 < T else n_nodes_total
        root_cov = coverage[lo]
        for node in range(lo, hi):
            if left[node] < 0:
                wgt = coverage[node] / root_cov
                for c in range(C):
                    out[c] += wgt * value[node, c]
    return out
