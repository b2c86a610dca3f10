"""Pure-Python kernels for the sparse transportation solver.

Same contracts and same operation order as the compiled ``_flow_ext``; used
when the extension is not built or ``ENKU_PURE_PYTHON`` is set.
"""

import heapq
from collections import deque

import numpy as np


def init_sources(sources, arc_ptr, arc_sink, arc_cost, flow, excess, deficit, pot):
    na = excess.shape[0]
    for i in sources:
        i = int(i)
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
        j = arc_sink[best]
        if excess[i] > 0 and deficit[j] > 0:
            amount = min(excess[i], deficit[j])
            flow[best] += amount
            excess[i] -= amount
            deficit[j] -= amount


def successive_shortest_paths(
    arc_ptr, arc_sink, arc_src, arc_cost, flow, sink_ptr, sink_arcs, excess, deficit, pot,
    failed_out,
):
    na = excess.shape[0]
    nb = deficit.shape[0]
    # Python lists index much faster than numpy scalars in tight loops.
    ptr = arc_ptr.tolist()
    snk = arc_sink.tolist()
    src = arc_src.tolist()
    cost = arc_cost.tolist()
    fl = flow.tolist()
    sptr = sink_ptr.tolist()
    sarcs = sink_arcs.tolist()
    exc = excess.tolist()
    dfc = deficit.tolist()
    h = pot.tolist()

    nn = na + nb
    dist = [0.0] * nn
    pred = [-1] * nn
    mark = [0] * nn
    done = [0] * nn
    stamp = 0
    n_failed = 0

    for s in range(na):
        while exc[s] > 0:
            stamp += 1
            visited = []
            target = -1
            big_d = 0.0
            dist[s] = 0.0
            mark[s] = stamp
            pred[s] = -1
            heap = [(0.0, s)]
            while heap:
                d, u = heapq.heappop(heap)
                if done[u] == stamp or d > dist[u]:
                    continue
                done[u] = stamp
                visited.append(u)
                if u >= na and dfc[u - na] > 0:
                    target = u
                    big_d = d
                    break
                hu = h[u]
                if u < na:
                    for a in range(ptr[u], ptr[u + 1]):
                        v = na + snk[a]
                        if done[v] == stamp:
                            continue
                        rc = cost[a] + hu - h[v]
                        if rc < 0.0:
                            rc = 0.0
                        nd = d + rc
                        if mark[v] != stamp or nd < dist[v]:
                            mark[v] = stamp
                            dist[v] = nd
                            pred[v] = a
                            heapq.heappush(heap, (nd, v))
                else:
                    for q in range(sptr[u - na], sptr[u - na + 1]):
                        a = sarcs[q]
                        if fl[a] <= 0:
                            continue
                        v = src[a]
                        if done[v] == stamp:
                            continue
                        rc = hu - cost[a] - h[v]
                        if rc < 0.0:
                            rc = 0.0
                        nd = d + rc
                        if mark[v] != stamp or nd < dist[v]:
                            mark[v] = stamp
                            dist[v] = nd
                            pred[v] = a
                            heapq.heappush(heap, (nd, v))
            if target < 0:
                failed_out[n_failed] = s
                n_failed += 1
                break
            for v in visited:
                h[v] += dist[v] - big_d
            delta = min(exc[s], dfc[target - na])
            v = target
            while v != s:
                a = pred[v]
                if v >= na:
                    v = src[a]
                else:
                    delta = min(delta, fl[a])
                    v = na + snk[a]
            v = target
            while v != s:
                a = pred[v]
                if v >= na:
                    fl[a] += delta
                    v = src[a]
                else:
                    fl[a] -= delta
                    v = na + snk[a]
            exc[s] -= delta
            dfc[target - na] -= delta

    flow[:] = fl
    excess[:] = exc
    deficit[:] = dfc
    pot[:] = h
    return n_failed


def scan_violations(a, b, pot, tol, limit, chunk=256):
    na = a.shape[0]
    pot_a = pot[:na]
    pot_b = pot[na:]
    rows, cols = [], []
    count = 0
    truncated = False
    worst = 0.0
    for start in range(0, na, chunk):
        block = a[start:start + chunk]
        diff = block[:, None, :] - b[None, :, :]
        rc = (diff * diff).sum(axis=2) + pot_a[start:start + chunk, None] - pot_b[None, :]
        worst = min(worst, float(rc.min()))
        ii, jj = np.nonzero(rc < -tol)
        room = limit - count
        if ii.size > room:
            truncated = True
            ii, jj = ii[:room], jj[:room]
        rows.append(ii + start)
        cols.append(jj)
        count += ii.size
    if rows:
        r = np.concatenate(rows).astype(np.int64)
        c = np.concatenate(cols).astype(np.int64)
    else:
        r = c = np.empty(0, dtype=np.int64)
    return r, c, worst, truncated


def repair_potentials(
    arc_ptr, arc_sink, arc_src, arc_cost, flow, sink_ptr, sink_arcs, pot, seeds, slack, max_relax
):
    na = arc_ptr.shape[0] - 1
    ptr = arc_ptr.tolist()
    snk = arc_sink.tolist()
    src = arc_src.tolist()
    cost = arc_cost.tolist()
    fl = flow.tolist()
    sptr = sink_ptr.tolist()
    sarcs = sink_arcs.tolist()
    h = pot.tolist()
    queue = deque()
    inq = [False] * len(h)
    for u in seeds.tolist():
        if not inq[u]:
            inq[u] = True
            queue.append(u)
    relax = 0
    while queue:
        u = queue.popleft()
        inq[u] = False
        if u < na:
            for a in range(ptr[u], ptr[u + 1]):
                v = na + snk[a]
                cand = h[u] + cost[a]
                if h[v] > cand + slack:
                    h[v] = cand
                    relax += 1
                    if not inq[v]:
                        inq[v] = True
                        queue.append(v)
        else:
            for q in range(sptr[u - na], sptr[u - na + 1]):
                a = sarcs[q]
                if fl[a] <= 0:
                    continue
                v = src[a]
                cand = h[u] - cost[a]
                if h[v] > cand + slack:
                    h[v] = cand
                    relax += 1
                    if not inq[v]:
                        inq[v] = True
                        queue.append(v)
        if relax > max_relax:
            break
    pot[:] = h
    return relax <= max_relax


def _sink_stats(price, j, cap):
    m1 = price[j * cap]
    best = j * cap
    m2 = 1e300
    for c in range(j * cap + 1, (j + 1) * cap):
        if price[c] < m1:
            m2 = m1
            m1 = price[c]
            best = c
        elif price[c] < m2:
            m2 = price[c]
    return m1, best, m2


def auction_prices(arc_ptr, arc_sink, arc_cost, cap, sink_price, eps_start, eps_end, factor, max_bids):
    na = arc_ptr.shape[0] - 1
    nb = sink_price.shape[0]
    ptr = arc_ptr.tolist()
    snk = arc_sink.tolist()
    cost = arc_cost.tolist()
    price = np.repeat(sink_price, cap).tolist()
    big = (max(cost) if cost else 0.0) + 1.0
    eps = eps_start
    bids = 0
    pmin = [0.0] * nb
    pidx = [0] * nb
    pmin2 = [0.0] * nb
    last = False
    while True:
        if eps <= eps_end:
            eps = eps_end
            last = True
        holder = [-1] * (nb * cap)
        for j in range(nb):
            pmin[j], pidx[j], pmin2[j] = _sink_stats(price, j, cap)
        queue = deque(range(na))
        while queue:
            i = queue.popleft()
            j1 = -1
            w1 = 1e300
            w2 = 1e300
            for a in range(ptr[i], ptr[i + 1]):
                j = snk[a]
                w = cost[a] + pmin[j]
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
                queue.append(holder[c])
            holder[c] = i
            pmin[j1], pidx[j1], pmin2[j1] = _sink_stats(price, j1, cap)
            bids += 1
            if bids > max_bids:
                break
        if last or bids > max_bids:
            break
        eps = eps / factor
    if bids <= max_bids:
        sink_price[:] = pmin
    return bids <= max_bids
