"""Network simplex kernel for transportation problems with few sinks.

The spanning-tree basis of a transportation problem with ``n`` sources and
``k`` sinks has at most ``k - 1`` sources of degree two or more. Those sources
and all sinks form the *core* tree; every other source is a leaf hanging off
a single sink with its whole supply. Leaves are stored as ``leaf_site[j]``
and never enter the potential computation: their potential is implied by
their one tight arc. Potentials of the core are recomputed by a breadth
first search whenever a pivot changes the core, which is ``O(k)``.

Sign conventions follow the dual of the assignment LP: ``eta[j] - gamma[i]
<= c[j, i]`` with equality on basic arcs; the reduced cost of arc ``(j, i)``
is ``c[j, i] + gamma[i] - eta[j]``.
"""

import numpy as np
from numba import njit

OPTIMAL = 0
PIVOT_CAP = 1
BROKEN_BASIS = 2


@njit(cache=True)
def arc_cost(X, S, A, j, i):
    d0 = X[j, 0] - S[i, 0]
    d1 = X[j, 1] - S[i, 1]
    d2 = X[j, 2] - S[i, 2]
    return (d0 * (A[i, 0, 0] * d0 + A[i, 0, 1] * d1 + A[i, 0, 2] * d2)
            + d1 * (A[i, 1, 0] * d0 + A[i, 1, 1] * d1 + A[i, 1, 2] * d2)
            + d2 * (A[i, 2, 0] * d0 + A[i, 2, 1] * d1 + A[i, 2, 2] * d2))


@njit(cache=True)
def northwest_corner(order, w, demand, tol, leaf_site, core_j, core_i, core_f):
    """Staircase initial basis visiting sources in ``order`` and sinks 0..k-1.

    When a source and a sink run out together only the source advances, so
    the next source opens a zero arc on the exhausted sink and the ``n+k-1``
    arcs stay a spanning tree. Sources left with one arc become leaves; arcs of
    the others go to the core arrays, whose new length is returned.
    """
    n = order.shape[0]
    k = demand.shape[0]
    d = demand.copy()
    arc_j = np.empty(n + k, dtype=np.int64)
    arc_i = np.empty(n + k, dtype=np.int64)
    arc_q = np.empty(n + k)
    na = 0
    i = 0
    p = 0
    s = w[order[0]]
    while True:
        j = order[p]
        last = p == n - 1
        if i == k - 1 or (last and i == k - 1):
            q = s
        else:
            q = min(s, d[i])
        arc_j[na] = j
        arc_i[na] = i
        arc_q[na] = q
        na += 1
        s -= q
        d[i] -= q
        if last:
            if i == k - 1:
                break
            i += 1
            continue
        if s <= tol or i == k - 1:
            p += 1
            s = w[order[p]]
        else:
            i += 1
    deg = np.zeros(w.shape[0], dtype=np.int64)
    for a in range(na):
        deg[arc_j[a]] += 1
    nc = 0
    for a in range(na):
        j = arc_j[a]
        if deg[j] == 1:
            leaf_site[j] = arc_i[a]
        else:
            leaf_site[j] = -1
            core_j[nc] = j
            core_i[nc] = arc_i[a]
            core_f[nc] = max(arc_q[a], 0.0)
            nc += 1
    return nc


@njit(cache=True)
def rebuild_core(k, core_j, core_i, core_c, nc, pos_of, node_pt, n_nodes_prev,
                 gamma, eta, par_node, par_arc, depth):
    """Recompute potentials and parent pointers of the core tree.

    Node ids: sinks ``0..k-1``; internal sources ``k..``. Returns the number
    of core nodes, or -1 if the core is not a spanning tree.
    """
    for t in range(k, n_nodes_prev):
        pos_of[node_pt[t]] = -1
    nn = k
    for a in range(nc):
        p = core_j[a]
        if pos_of[p] < 0:
            pos_of[p] = nn
            node_pt[nn] = p
            nn += 1
    if nc != nn - 1:
        return -1
    deg = np.zeros(nn + 1, dtype=np.int64)
    for a in range(nc):
        deg[core_i[a] + 1] += 1
        deg[pos_of[core_j[a]] + 1] += 1
    for t in range(nn):
        deg[t + 1] += deg[t]
    fill = deg[:nn].copy()
    adj = np.empty(2 * nc, dtype=np.int64)
    for a in range(nc):
        u = core_i[a]
        v = pos_of[core_j[a]]
        adj[fill[u]] = a
        fill[u] += 1
        adj[fill[v]] = a
        fill[v] += 1
    pot = np.empty(nn)
    seen = np.zeros(nn, dtype=np.bool_)
    queue = np.empty(nn, dtype=np.int64)
    queue[0] = 0
    seen[0] = True
    pot[0] = 0.0
    par_node[0] = -1
    par_arc[0] = -1
    depth[0] = 0
    head = 0
    tail = 1
    while head < tail:
        u = queue[head]
        head += 1
        for e in range(deg[u], deg[u + 1]):
            a = adj[e]
            if u < k:
                v = pos_of[core_j[a]]
            else:
                v = core_i[a]
            if seen[v]:
                continue
            seen[v] = True
            if u < k:
                pot[v] = core_c[a] + pot[u]       # eta of a source
            else:
                pot[v] = pot[u] - core_c[a]       # gamma of a sink
            par_node[v] = u
            par_arc[v] = a
            depth[v] = depth[u] + 1
            queue[tail] = v
            tail += 1
    if tail != nn:
        return -1
    for i in range(k):
        gamma[i] = pot[i]
    for t in range(k, nn):
        eta[node_pt[t]] = pot[t]
    return nn


@njit(cache=True)
def _remove_core_arc(a, core_j, core_i, core_f, core_c, nc):
    last = nc - 1
    core_j[a] = core_j[last]
    core_i[a] = core_i[last]
    core_f[a] = core_f[last]
    core_c[a] = core_c[last]
    return last


@njit(cache=True)
def _push_core_arc(j, i, f, c, core_j, core_i, core_f, core_c, nc):
    core_j[nc] = j
    core_i[nc] = i
    core_f[nc] = f
    core_c[nc] = c
    return nc + 1


@njit(cache=True)
def run_simplex(X, S, A, w, cand, cand_cost, leaf_site, leaf_cost,
                core_j, core_i, core_f, core_c, nc_box, pos_of, node_pt, nn_box,
                gamma, eta, par_node, par_arc, depth,
                tol_r, tol_f, max_pivots, block, stall, stats):
    """Pivot until no candidate arc has negative reduced cost.

    ``stats`` receives ``[pivots, degenerate pivots, bland pivots]``.
    """
    n = X.shape[0]
    k = S.shape[0]
    m = cand.shape[1]
    nc = nc_box[0]
    nn = nn_box[0]
    maxp = 2 * k + 8
    path_a = np.empty(maxp, dtype=np.int64)
    path_s = np.empty(maxp, dtype=np.int64)
    tmp_a = np.empty(maxp, dtype=np.int64)
    tmp_s = np.empty(maxp, dtype=np.int64)
    pivots = 0
    degenerate_run = 0
    bland = False
    ptr = 0
    status = OPTIMAL
    while True:
        # ---- pricing
        ent_j = -1
        ent_i = -1
        ent_c = 0.0
        if bland:
            for j in range(n):
                if leaf_site[j] >= 0:
                    eta_j = leaf_cost[j] + gamma[leaf_site[j]]
                else:
                    eta_j = eta[j]
                best_i = k
                for q in range(m):
                    i = cand[j, q]
                    r = cand_cost[j, q] + gamma[i] - eta_j
                    if r < -tol_r and i < best_i:
                        best_i = i
                        ent_c = cand_cost[j, q]
                if best_i < k:
                    ent_j = j
                    ent_i = best_i
                    break
        else:
            scanned = 0
            best_r = -tol_r
            while scanned < n:
                for _ in range(block):
                    j = ptr
                    ptr += 1
                    if ptr == n:
                        ptr = 0
                    scanned += 1
                    if leaf_site[j] >= 0:
                        eta_j = leaf_cost[j] + gamma[leaf_site[j]]
                    else:
                        eta_j = eta[j]
                    for q in range(m):
                        i = cand[j, q]
                        r = cand_cost[j, q] + gamma[i] - eta_j
                        if r < best_r:
                            best_r = r
                            ent_j = j
                            ent_i = i
                            ent_c = cand_cost[j, q]
                    if scanned >= n:
                        break
                if ent_j >= 0:
                    break
        if ent_j < 0:
            break
        if pivots >= max_pivots:
            status = PIVOT_CAP
            break

        # ---- cycle: entering arc ent_j -> ent_i, then tree path back to ent_j
        j = ent_j
        is_leaf = leaf_site[j] >= 0
        a_node = ent_i
        if is_leaf:
            b_node = leaf_site[j]
        else:
            b_node = pos_of[j]
        np_ = 0
        while depth[a_node] > depth[b_node]:
            path_a[np_] = par_arc[a_node]
            path_s[np_] = -1 if a_node < k else 1
            np_ += 1
            a_node = par_node[a_node]
        nv = 0
        while depth[b_node] > depth[a_node]:
            tmp_a[nv] = par_arc[b_node]
            tmp_s[nv] = -1 if b_node >= k else 1
            nv += 1
            b_node = par_node[b_node]
        while a_node != b_node:
            path_a[np_] = par_arc[a_node]
            path_s[np_] = -1 if a_node < k else 1
            np_ += 1
            a_node = par_node[a_node]
            tmp_a[nv] = par_arc[b_node]
            tmp_s[nv] = -1 if b_node >= k else 1
            nv += 1
            b_node = par_node[b_node]
        for t in range(nv - 1, -1, -1):
            path_a[np_] = tmp_a[t]
            path_s[np_] = tmp_s[t]
            np_ += 1

        # ---- ratio test; leaf arc (flow w[j]) is decreasing when j is a leaf
        theta = np.inf
        leave = -2                      # -1 = the leaf arc of j
        leave_key = 0
        if is_leaf:
            theta = w[j]
            leave = -1
            leave_key = j * k + leaf_site[j]
        for t in range(np_):
            if path_s[t] < 0:
                a = path_a[t]
                f = core_f[a]
                key = core_j[a] * k + core_i[a]
                if f < theta - tol_f:
                    theta = f
                    leave = a
                    leave_key = key
                elif f <= theta + tol_f:
                    if bland:
                        if key < leave_key:
                            leave = a
                            leave_key = key
                            theta = min(theta, f)
                    elif leave != -1:
                        # prefer the leaf arc on ties: it leaves the core intact
                        pass
        if theta < 0.0:
            theta = 0.0

        # ---- flow update
        for t in range(np_):
            a = path_a[t]
            core_f[a] += path_s[t] * theta
            if core_f[a] < 0.0:
                core_f[a] = 0.0

        pivots += 1
        if theta <= tol_f:
            degenerate_run += 1
            stats[1] += 1
        else:
            degenerate_run = 0
            bland = False
        if bland:
            stats[2] += 1
        if degenerate_run > stall:
            bland = True

        if leave == -1:
            leaf_site[j] = ent_i
            leaf_cost[j] = ent_c
            continue

        core_f[leave] = 0.0
        p = core_j[leave]
        if is_leaf:
            nc = _push_core_arc(j, leaf_site[j], w[j] - theta, leaf_cost[j],
                                core_j, core_i, core_f, core_c, nc)
            leaf_site[j] = -1
        nc = _push_core_arc(j, ent_i, theta, ent_c, core_j, core_i, core_f, core_c, nc)
        nc = _remove_core_arc(leave, core_j, core_i, core_f, core_c, nc)
        cnt = 0
        other = -1
        for a in range(nc):
            if core_j[a] == p:
                cnt += 1
                other = a
        if cnt == 1:
            leaf_site[p] = core_i[other]
            leaf_cost[p] = core_c[other]
            nc = _remove_core_arc(other, core_j, core_i, core_f, core_c, nc)
        nn = rebuild_core(k, core_j, core_i, core_c, nc, pos_of, node_pt, nn,
                          gamma, eta, par_node, par_arc, depth)
        if nn < 0:
            status = BROKEN_BASIS
            break
    nc_box[0] = nc
    nn_box[0] = max(nn, k)
    stats[0] += pivots
    return status
