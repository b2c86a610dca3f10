# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the sparse transportation solver.

Mirrors ``_flow_py`` operation for operation, including heap tie-breaking on
``(distance, node)``, so both backends follow the same augmentation sequence.
"""

import numpy as np
cimport numpy as cnp

ctypedef cnp.int64_t i64

cnp.import_array()


cdef inline bint _less(double k1, i64 v1, double k2, i64 v2) noexcept nogil:
    return k1 < k2 or (k1 == k2 and v1 < v2)


cdef inline void _push(double* hk, i64* hv, i64* size, double key, i64 val) noexcept nogil:
    cdef i64 i = size[0]
    cdef i64 parent
    size[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if not _less(key, val, hk[parent], hv[parent]):
            break
        hk[i] = hk[parent]
        hv[i] = hv[parent]
        i = parent
    hk[i] = key
    hv[i] = val


cdef inline void _pop(double* hk, i64* hv, i64* size, double* key, i64* val) noexcept nogil:
    cdef i64 n, i, c
    cdef double lk
    cdef i64 lv
    key[0] = hk[0]
    val[0] = hv[0]
    size[0] -= 1
    n = size[0]
    if n == 0:
        return
    lk = hk[n]
    lv = hv[n]
    i = 0
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        if c + 1 < n and _less(hk[c + 1], hv[c + 1], hk[c], hv[c]):
            c += 1
        if not _less(hk[c], hv[c], lk, lv):
            break
        hk[i] = hk[c]
        hv[i] = hv[c]
        i = c
    hk[i] = lk
    hv[i] = lv


def init_sources(
    i64[::1] sources,
    i64[::1] arc_ptr,
    i64[::1] arc_sink,
    double[::1] arc_cost,
    i64[::1] flow,
    i64[::1] excess,
    i64[::1] deficit,
    double[::1] pot,
):
    """Make each listed source tight on its cheapest reduced arc and push
    flow along that arc when the sink still has demand."""
    cdef i64 na = excess.shape[0]
    cdef i64 t, i, a, best
    cdef double val, bestval
    cdef i64 amount
    with nogil:
        for t in range(sources.shape[0]):
            i = sources[t]
            best = -1
            bestval = 0.0
            for a in range(arc_ptr[i], arc_ptr[i + 1]):
                val = arc_cost[a] - pot[na + arc_sink[a]]
                if best < 0 or val < bestval:
                    best = a
                    bestval = val
            if best < 0:
                continue
            pot[i] = -bestval
            if excess[i] > 0 and deficit[arc_sink[best]] > 0:
                amount = excess[i]
                if deficit[arc_sink[best]] < amount:
                    amount = deficit[arc_sink[best]]
                flow[best] += amount
                excess[i] -= amount
                deficit[arc_sink[best]] -= amount


def successive_shortest_paths(
    i64[::1] arc_ptr,
    i64[::1] arc_sink,
    i64[::1] arc_src,
    double[::1] arc_cost,
    i64[::1] flow,
    i64[::1] sink_ptr,
    i64[::1] sink_arcs,
    i64[::1] excess,
    i64[::1] deficit,
    double[::1] pot,
    i64[::1] failed_out,
):
    """Drain all source excess along shortest residual paths.

    Sources from which no sink with remaining demand is reachable in the
    candidate graph keep their excess and are written to ``failed_out``;
    returns how many there were.
    """
    cdef i64 na = excess.shape[0]
    cdef i64 nb = deficit.shape[0]
    cdef i64 nn = na + nb
    cdef i64 n_arcs = arc_sink.shape[0]

    cdef cnp.ndarray[double, ndim=1] dist_arr = np.zeros(nn, dtype=np.float64)
    cdef cnp.ndarray[i64, ndim=1] pred_arr = np.full(nn, -1, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] mark_arr = np.zeros(nn, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] done_arr = np.zeros(nn, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] vis_arr = np.zeros(nn, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] hk_arr = np.zeros(n_arcs + nn + 1, dtype=np.float64)
    cdef cnp.ndarray[i64, ndim=1] hv_arr = np.zeros(n_arcs + nn + 1, dtype=np.int64)

    cdef double* dist = <double*> dist_arr.data
    cdef i64* pred = <i64*> pred_arr.data
    cdef i64* mark = <i64*> mark_arr.data
    cdef i64* done = <i64*> done_arr.data
    cdef i64* visited = <i64*> vis_arr.data
    cdef double* hk = <double*> hk_arr.data
    cdef i64* hv = <i64*> hv_arr.data

    cdef i64 stamp = 0
    cdef i64 s, u, v, a, q, j, target, nvis, hsize, k
    cdef i64 delta
    cdef double d, nd, rc, hu, big_d
    cdef i64 n_failed = 0

    with nogil:
        for s in range(na):
            while excess[s] > 0:
                stamp += 1
                hsize = 0
                nvis = 0
                target = -1
                big_d = 0.0
                dist[s] = 0.0
                mark[s] = stamp
                pred[s] = -1
                _push(hk, hv, &hsize, 0.0, s)
                while hsize > 0:
                    _pop(hk, hv, &hsize, &d, &u)
                    if done[u] == stamp or d > dist[u]:
                        continue
                    done[u] = stamp
                    visited[nvis] = u
                    nvis += 1
                    if u >= na and deficit[u - na] > 0:
                        target = u
                        big_d = d
                        break
                    hu = pot[u]
                    if u < na:
                        for a in range(arc_ptr[u], arc_ptr[u + 1]):
                            v = na + arc_sink[a]
                            if done[v] == stamp:
                                continue
                            rc = arc_cost[a] + hu - pot[v]
                            if rc < 0.0:
                                rc = 0.0
                            nd = d + rc
                            if mark[v] != stamp or nd < dist[v]:
                                mark[v] = stamp
                                dist[v] = nd
                                pred[v] = a
                                _push(hk, hv, &hsize, nd, v)
                    else:
                        j = u - na
                        for q in range(sink_ptr[j], sink_ptr[j + 1]):
                            a = sink_arcs[q]
                            if flow[a] <= 0:
                                continue
                            v = arc_src[a]
                            if done[v] == stamp:
                                continue
                            rc = hu - arc_cost[a] - pot[v]
                            if rc < 0.0:
                                rc = 0.0
                            nd = d + rc
                            if mark[v] != stamp or nd < dist[v]:
                                mark[v] = stamp
                                dist[v] = nd
                                pred[v] = a
                                _push(hk, hv, &hsize, nd, v)
                if target < 0:
                    failed_out[n_failed] = s
                    n_failed += 1
                    break
                for k in range(nvis):
                    v = visited[k]
                    pot[v] += dist[v] - big_d
                delta = excess[s]
                if deficit[target - na] < delta:
                    delta = deficit[target - na]
                v = target
                while v != s:
                    a = pred[v]
                    if v >= na:
                        v = arc_src[a]
                    else:
                        if flow[a] < delta:
                            delta = flow[a]
                        v = na + arc_sink[a]
                v = target
                while v != s:
                    a = pred[v]
                    if v >= na:
                        flow[a] += delta
                        v = arc_src[a]
                    else:
                        flow[a] -= delta
                        v = na + arc_sink[a]
                excess[s] -= delta
                deficit[target - na] -= delta
    return n_failed


def scan_violations(
    const double[:, ::1] a,
    const double[:, ::1] b,
    double[::1] pot,
    double tol,
    i64 limit,
):
    """Pairs whose reduced cost ``|a_i - b_j|^2 + pot_i - pot_j`` is below ``-tol``.

    Returns ``(rows, cols, min_reduced_cost, truncated)``.
    """
    cdef i64 na = a.shape[0]
    cdef i64 nb = b.shape[0]
    cdef i64 dim = a.shape[1]
    cdef cnp.ndarray[i64, ndim=1] rows = np.empty(limit, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] cols = np.empty(limit, dtype=np.int64)
    cdef i64 count = 0
    cdef bint truncated = False
    cdef double worst = 0.0
    cdef double c, diff, hi
    cdef i64 i, j, k
    with nogil:
        for i in range(na):
            hi = pot[i]
            for j in range(nb):
                c = 0.0
                for k in range(dim):
                    diff = a[i, k] - b[j, k]
                    c = c + diff * diff
                c = c + hi - pot[na + j]
                if c < worst:
                    worst = c
                if c < -tol:
                    if count < limit:
                        rows[count] = i
                        cols[count] = j
                        count += 1
                    else:
                        truncated = True
    return rows[:count].copy(), cols[:count].copy(), worst, bool(truncated)


def repair_potentials(
    i64[::1] arc_ptr,
    i64[::1] arc_sink,
    i64[::1] arc_src,
    double[::1] arc_cost,
    i64[::1] flow,
    i64[::1] sink_ptr,
    i64[::1] sink_arcs,
    double[::1] pot,
    i64[::1] seeds,
    double slack,
    i64 max_relax,
):
    """Lower potentials by label correction until every residual arc has
    nonnegative reduced cost, starting from the tails in ``seeds``.

    The flow is untouched. Returns ``False`` if ``max_relax`` relaxations did
    not suffice, which signals a negative residual cycle.
    """
    cdef i64 na = arc_ptr.shape[0] - 1
    cdef i64 nb = sink_ptr.shape[0] - 1
    cdef i64 nn = na + nb
    cdef cnp.ndarray[i64, ndim=1] queue_arr = np.empty(nn + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] inq_arr = np.zeros(nn, dtype=np.uint8)
    cdef i64* queue = <i64*> queue_arr.data
    cdef cnp.uint8_t* inq = <cnp.uint8_t*> inq_arr.data
    cdef i64 head = 0, tail = 0, count = 0, relax = 0
    cdef i64 t, u, v, a, q, j
    cdef double cand
    with nogil:
        for t in range(seeds.shape[0]):
            u = seeds[t]
            if not inq[u]:
                inq[u] = 1
                queue[tail] = u
                tail = (tail + 1) % (nn + 1)
                count += 1
        while count > 0:
            u = queue[head]
            head = (head + 1) % (nn + 1)
            count -= 1
            inq[u] = 0
            if u < na:
                for a in range(arc_ptr[u], arc_ptr[u + 1]):
                    v = na + arc_sink[a]
                    cand = pot[u] + arc_cost[a]
                    if pot[v] > cand + slack:
                        pot[v] = cand
                        relax += 1
                        if not inq[v]:
                            inq[v] = 1
                            queue[tail] = v
                            tail = (tail + 1) % (nn + 1)
                            count += 1
            else:
                j = u - na
                for q in range(sink_ptr[j], sink_ptr[j + 1]):
                    a = sink_arcs[q]
                    if flow[a] <= 0:
                        continue
                    v = arc_src[a]
                    cand = pot[u] - arc_cost[a]
                    if pot[v] > cand + slack:
                        pot[v] = cand
                        relax += 1
                        if not inq[v]:
                            inq[v] = 1
                            queue[tail] = v
                            tail = (tail + 1) % (nn + 1)
                            count += 1
            if relax > max_relax:
                break
    return relax <= max_relax


cdef inline void _sink_stats(double* price, i64 j, i64 cap, double* pmin, i64* pidx,
                             double* pmin2) noexcept nogil:
    cdef i64 c, best = j * cap
    cdef double m1 = price[j * cap], m2 = 1e300
    for c in range(j * cap + 1, (j + 1) * cap):
        if price[c] < m1:
            m2 = m1
            m1 = price[c]
            best = c
        elif price[c] < m2:
            m2 = price[c]
    pmin[j] = m1
    pidx[j] = best
    pmin2[j] = m2


def auction_prices(
    i64[::1] arc_ptr,
    i64[::1] arc_sink,
    double[::1] arc_cost,
    i64 cap,
    double[::1] sink_price,
    double eps_start,
    double eps_end,
    double factor,
    i64 max_bids,
):
    """Forward auction with epsilon scaling for unit sources and sinks of
    capacity ``cap`` (each sink is replicated ``cap`` times).

    ``sink_price`` holds the starting price per sink and receives the
    cheapest copy price at exit. Returns ``False`` if ``max_bids`` was hit,
    which happens when the graph admits no complete assignment.
    """
    cdef i64 na = arc_ptr.shape[0] - 1
    cdef i64 nb = sink_price.shape[0]
    cdef i64 ncopy = nb * cap
    cdef cnp.ndarray[double, ndim=1] price_arr = np.repeat(np.asarray(sink_price), cap)
    cdef cnp.ndarray[i64, ndim=1] holder_arr = np.empty(ncopy, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] pmin_arr = np.empty(nb, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] pmin2_arr = np.empty(nb, dtype=np.float64)
    cdef cnp.ndarray[i64, ndim=1] pidx_arr = np.empty(nb, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] queue_arr = np.empty(na + 1, dtype=np.int64)
    cdef double* price = <double*> price_arr.data
    cdef i64* holder = <i64*> holder_arr.data
    cdef double* pmin = <double*> pmin_arr.data
    cdef double* pmin2 = <double*> pmin2_arr.data
    cdef i64* pidx = <i64*> pidx_arr.data
    cdef i64* queue = <i64*> queue_arr.data
    cdef double big = 0.0
    cdef double eps = eps_start
    cdef double w, w1, w2
    cdef i64 head, tail, count, i, a, j, j1, c, bids = 0, t
    cdef bint last = False
    with nogil:
        for a in range(arc_cost.shape[0]):
            if arc_cost[a] > big:
                big = arc_cost[a]
        big = big + 1.0
        while True:
            if eps <= eps_end:
                eps = eps_end
                last = True
            for c in range(ncopy):
                holder[c] = -1
            for j in range(nb):
                _sink_stats(price, j, cap, pmin, pidx, pmin2)
            for t in range(na):
                queue[t] = t
            head = 0
            tail = na
            count = na
            while count > 0:
                i = queue[head]
                head = (head + 1) % (na + 1)
                count -= 1
                j1 = -1
                w1 = 1e300
                w2 = 1e300
                for a in range(arc_ptr[i], arc_ptr[i + 1]):
                    j = arc_sink[a]
                    w = arc_cost[a] + pmin[j]
                    if w < w1:
                        if j1 >= 0 and w1 < w2:
                            w2 = w1
                        w1 = w
                        j1 = j
                    elif w < w2 and j != j1:
                        w2 = w
                if j1 < 0:
                    continue
                w = w1 - pmin[j1] + pmin2[j1]
                if w < w2:
                    w2 = w
                if w2 > w1 + big:
                    w2 = w1 + big
                c = pidx[j1]
                price[c] += w2 - w1 + eps
                if holder[c] >= 0:
                    queue[tail] = holder[c]
                    tail = (tail + 1) % (na + 1)
                    count += 1
                holder[c] = i
                _sink_stats(price, j1, cap, pmin, pidx, pmin2)
                bids += 1
                if bids > max_bids:
                    break
            if last or bids > max_bids:
                break
            eps = eps / factor
        if bids <= max_bids:
            for j in range(nb):
                sink_price[j] = pmin[j]
    return bids <= max_bids
