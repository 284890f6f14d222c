"""Compiled connectivity and simulation kernels.

Graphs are passed as the tuple from ``GatedGraph.arrays()`` unpacked into
``indptr, nbr, eb, vb, src, tgt, inv``.  Random numbers come only from
``np.random.random()`` after ``np.random.seed(seed)``, which matches
``numpy.random.RandomState(seed).random_sample()`` draw for draw.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

INF = np.inf


@njit(cache=True, inline="always")
def _usable(bit, inv, bits):
    if bit < 0:
        return True
    return (bits[bit] ^ inv) == 1


@njit(cache=True)
def bfs(indptr, nbr, eb, vb, src, tgt, inv, bits, mark, queue, stop_at_target):
    """Mark every usable vertex reachable from a usable source.

    ``mark`` must be zero on entry.  Reached vertices are ``queue[:count]``.
    Returns ``(count, hit_target)``; with ``stop_at_target`` the search ends
    at the first target reached.
    """
    head = 0
    tail = 0
    hit = False
    n = indptr.size - 1
    for v in range(n):
        if src[v] and _usable(vb[v], inv, bits):
            mark[v] = 1
            queue[tail] = v
            tail += 1
            if tgt[v]:
                hit = True
    if hit and stop_at_target:
        return tail, True
    while head < tail:
        u = queue[head]
        head += 1
        for k in range(indptr[u], indptr[u + 1]):
            w = nbr[k]
            if mark[w] or not _usable(eb[k], inv, bits) or not _usable(vb[w], inv, bits):
                continue
            mark[w] = 1
            queue[tail] = w
            tail += 1
            if tgt[w]:
                hit = True
                if stop_at_target:
                    return tail, True
    return tail, hit


@njit(cache=True)
def has_crossing(indptr, nbr, eb, vb, src, tgt, inv, bits):
    n = indptr.size - 1
    mark = np.zeros(n, np.int8)
    queue = np.empty(n, np.int64)
    return bfs(indptr, nbr, eb, vb, src, tgt, inv, bits, mark, queue, True)[1]


@njit(cache=True)
def _closed_pivotal(indptr, nbr, eb, vb, src, tgt, inv, bits):
    """Bits unusable in this graph whose opening would create a crossing."""
    n = indptr.size - 1
    ms = np.zeros(n, np.int8)
    mt = np.zeros(n, np.int8)
    queue = np.empty(n, np.int64)
    if bfs(indptr, nbr, eb, vb, src, tgt, inv, bits, ms, queue, True)[1]:
        return 0
    bfs(indptr, nbr, eb, vb, tgt, src, inv, bits, mt, queue, False)
    count = 0
    for v in range(n):
        if vb[v] >= 0 and not _usable(vb[v], inv, bits):
            s = src[v]
            t = tgt[v]
            for k in range(indptr[v], indptr[v + 1]):
                if _usable(eb[k], inv, bits):
                    w = nbr[k]
                    s = s or ms[w] == 1
                    t = t or mt[w] == 1
            if s and t:
                count += 1
        for k in range(indptr[v], indptr[v + 1]):
            w = nbr[k]
            if eb[k] >= 0 and v < w and not _usable(eb[k], inv, bits):
                if not (_usable(vb[v], inv, bits) and _usable(vb[w], inv, bits)):
                    continue
                if (ms[v] and mt[w]) or (ms[w] and mt[v]):
                    count += 1
    return count


@njit(cache=True)
def count_pivotal(p_indptr, p_nbr, p_eb, p_vb, p_src, p_tgt, p_inv,
                  d_indptr, d_nbr, d_eb, d_vb, d_src, d_tgt, d_inv, bits):
    """Bits whose flip changes the primal crossing, via primal and dual labelling."""
    return (_closed_pivotal(p_indptr, p_nbr, p_eb, p_vb, p_src, p_tgt, p_inv, bits)
            + _closed_pivotal(d_indptr, d_nbr, d_eb, d_vb, d_src, d_tgt, d_inv, bits))


@njit(cache=True)
def largest_cluster(indptr, nbr, eb, vb, inv, bits):
    n = indptr.size - 1
    seen = np.zeros(n, np.int8)
    queue = np.empty(n, np.int64)
    best = 0
    for s in range(n):
        if seen[s] or not _usable(vb[s], inv, bits):
            continue
        seen[s] = 1
        queue[0] = s
        head = 0
        tail = 1
        while head < tail:
            u = queue[head]
            head += 1
            for k in range(indptr[u], indptr[u + 1]):
                w = nbr[k]
                if seen[w] or not _usable(eb[k], inv, bits) or not _usable(vb[w], inv, bits):
                    continue
                seen[w] = 1
                queue[tail] = w
                tail += 1
        if tail > best:
            best = tail
    return best


@njit(cache=True)
def _touches(indptr, nbr, src, mark, bu, bw, b):
    """Whether opening bit ``b`` can extend the reach recorded in ``mark``."""
    u = bu[b]
    w = bw[b]
    if u != w:
        return mark[u] == 1 or mark[w] == 1
    if src[u]:
        return True
    for k in range(indptr[u], indptr[u + 1]):
        if mark[nbr[k]]:
            return True
    return False


@njit(cache=True)
def _fair_bits(n_bits):
    bits = np.empty(n_bits, np.uint8)
    for i in range(n_bits):
        bits[i] = 1 if np.random.random() < 0.5 else 0
    return bits


@njit(cache=True)
def random_bits(seed, n_bits):
    np.random.seed(seed)
    return _fair_bits(n_bits)


@njit(cache=True)
def _next_event(t, total_rate, n_bits):
    u = np.random.random()
    dt = -math.log(1.0 - u) / total_rate if total_rate > 0 else INF
    b = int(np.random.random() * n_bits)
    if b >= n_bits:
        b = n_bits - 1
    new = 1 if np.random.random() < 0.5 else 0
    return t + dt, b, new


@njit(cache=True)
def _restart(indptr, nbr, eb, vb, src, tgt, inv, bits, mark, queue, count, stop):
    for i in range(count):
        mark[queue[i]] = 0
    return bfs(indptr, nbr, eb, vb, src, tgt, inv, bits, mark, queue, stop)


@njit(cache=True)
def crossing_run(p_indptr, p_nbr, p_eb, p_vb, p_src, p_tgt, p_inv, p_bu, p_bw,
                 d_indptr, d_nbr, d_eb, d_vb, d_src, d_tgt, d_inv, d_bu, d_bw,
                 n_bits, rate, grid, t_max, seed, track, record_cluster,
                 status, density, cluster):
    """One replica of resampling dynamics on a crossing geometry.

    Each bit rings at ``rate`` and resamples to a fair bit.  With ``track``
    the crossing status is maintained at every flip that could change it
    (openings while uncrossed, closings while crossed), using the previous
    reach as a filter: an opening that touches neither the reach nor a
    source cannot extend it.  Without ``track`` the status is only
    recomputed at grid times.

    Fills ``status``/``density``/``cluster`` at the grid times and returns
    ``(exit_time, changes)``; ``exit_time`` is ``inf`` if the crossing held
    through ``t_max`` and ``changes`` counts status changes in ``[0, t_max]``.
    """
    np.random.seed(seed)
    bits = _fair_bits(n_bits)
    n_open = 0
    for i in range(n_bits):
        n_open += bits[i]
    np_ = p_indptr.size - 1
    nd = d_indptr.size - 1
    mp = np.zeros(np_, np.int8)
    qp = np.empty(np_, np.int64)
    md = np.zeros(nd, np.int8)
    qd = np.empty(nd, np.int64)
    cp, S = bfs(p_indptr, p_nbr, p_eb, p_vb, p_src, p_tgt, p_inv, bits, mp, qp, True)
    cd = 0
    valid_p = not S
    valid_d = False
    exit_time = INF if S else 0.0
    changes = 0
    t = 0.0
    gi = 0
    G = grid.size
    total = rate * n_bits
    while True:
        tn, b, new = _next_event(t, total, n_bits)
        while gi < G and grid[gi] < tn:
            if not track:
                cp, S = _restart(p_indptr, p_nbr, p_eb, p_vb, p_src, p_tgt, p_inv,
                                 bits, mp, qp, cp, True)
            status[gi] = S
            density[gi] = n_open / n_bits
            if record_cluster:
                cluster[gi] = largest_cluster(p_indptr, p_nbr, p_eb, p_vb, p_inv, bits)
            gi += 1
        if tn > t_max:
            break
        t = tn
        if bits[b] == new:
            continue
        bits[b] = new
        n_open += 1 if new == 1 else -1
        if not track:
            continue
        if new == 1:
            if S:
                valid_p = False
            elif (not valid_p) or _touches(p_indptr, p_nbr, p_src, mp, p_bu, p_bw, b):
                cp, hit = _restart(p_indptr, p_nbr, p_eb, p_vb, p_src, p_tgt, p_inv,
                                   bits, mp, qp, cp, True)
                if hit:
                    S = True
                    changes += 1
                    valid_p = False
                else:
                    valid_p = True
        else:
            if not S:
                valid_d = False
            elif (not valid_d) or _touches(d_indptr, d_nbr, d_src, md, d_bu, d_bw, b):
                cd, hit = _restart(d_indptr, d_nbr, d_eb, d_vb, d_src, d_tgt, d_inv,
                                   bits, md, qd, cd, True)
                if hit:
                    S = False
                    changes += 1
                    valid_d = False
                    if exit_time == INF:
                        exit_time = t
                else:
                    valid_d = True
    return exit_time, changes


@njit(cache=True)
def crossing_batch(p_indptr, p_nbr, p_eb, p_vb, p_src, p_tgt, p_inv, p_bu, p_bw,
                   d_indptr, d_nbr, d_eb, d_vb, d_src, d_tgt, d_inv, d_bu, d_bw,
                   n_bits, rate, grid, t_max, seeds, track, record_cluster):
    R = seeds.size
    G = grid.size
    status = np.zeros((R, G), np.bool_)
    density = np.zeros((R, G))
    cluster = np.zeros((R, G), np.int64)
    exits = np.empty(R)
    changes = np.empty(R, np.int64)
    for r in range(R):
        e, c = crossing_run(p_indptr, p_nbr, p_eb, p_vb, p_src, p_tgt, p_inv, p_bu, p_bw,
                            d_indptr, d_nbr, d_eb, d_vb, d_src, d_tgt, d_inv, d_bu, d_bw,
                            n_bits, rate, grid, t_max, seeds[r], track, record_cluster,
                            status[r], density[r], cluster[r])
        exits[r] = e
        changes[r] = c
    return status, density, cluster, exits, changes


@njit(cache=True)
def piv_batch(p_indptr, p_nbr, p_eb, p_vb, p_src, p_tgt, p_inv,
              d_indptr, d_nbr, d_eb, d_vb, d_src, d_tgt, d_inv, n_bits, seeds):
    """Pivotal count and crossing indicator of one fair sample per seed."""
    R = seeds.size
    piv = np.empty(R, np.int64)
    cross = np.empty(R, np.bool_)
    for r in range(R):
        np.random.seed(seeds[r])
        bits = _fair_bits(n_bits)
        piv[r] = count_pivotal(p_indptr, p_nbr, p_eb, p_vb, p_src, p_tgt, p_inv,
                               d_indptr, d_nbr, d_eb, d_vb, d_src, d_tgt, d_inv, bits)
        cross[r] = has_crossing(p_indptr, p_nbr, p_eb, p_vb, p_src, p_tgt, p_inv, bits)
    return piv, cross


@njit(cache=True)
def piv_exhaustive(p_indptr, p_nbr, p_eb, p_vb, p_src, p_tgt, p_inv,
                   d_indptr, d_nbr, d_eb, d_vb, d_src, d_tgt, d_inv, n_bits):
    """Total pivotal count and number of crossing configurations over all ``2^n_bits``."""
    bits = np.empty(n_bits, np.uint8)
    total = 0
    crossing = 0
    for code in range(1 << n_bits):
        for i in range(n_bits):
            bits[i] = (code >> i) & 1
        total += count_pivotal(p_indptr, p_nbr, p_eb, p_vb, p_src, p_tgt, p_inv,
                               d_indptr, d_nbr, d_eb, d_vb, d_src, d_tgt, d_inv, bits)
        if has_crossing(p_indptr, p_nbr, p_eb, p_vb, p_src, p_tgt, p_inv, bits):
            crossing += 1
    return total, crossing


@njit(cache=True)
def _max_dist(count, queue, dist):
    m = -1
    for i in range(count):
        d = dist[queue[i]]
        if d > m:
            m = d
    return m


@njit(cache=True)
def fet_run(indptr, nbr, eb, vb, src, tgt, inv, bu, bw, dist, radii, n_bits, rate,
            t_max, seed, out):
    """First times the origin cluster reaches distance ``radii[i]`` (``inf`` past ``t_max``).

    Simulating the largest ball and reading off smaller radii couples every
    radius to the same bits and clocks.
    """
    np.random.seed(seed)
    bits = _fair_bits(n_bits)
    n = indptr.size - 1
    mark = np.zeros(n, np.int8)
    queue = np.empty(n, np.int64)
    K = radii.size
    for i in range(K):
        out[i] = INF
    count, _ = bfs(indptr, nbr, eb, vb, src, tgt, inv, bits, mark, queue, False)
    reached = _max_dist(count, queue, dist)
    done = 0
    while done < K and radii[done] <= reached:
        out[done] = 0.0
        done += 1
    t = 0.0
    total = rate * n_bits
    while done < K:
        tn, b, new = _next_event(t, total, n_bits)
        if tn > t_max:
            break
        t = tn
        if bits[b] == new:
            continue
        bits[b] = new
        if new == 1 and _touches(indptr, nbr, src, mark, bu, bw, b):
            count, _ = _restart(indptr, nbr, eb, vb, src, tgt, inv, bits, mark, queue, count, False)
            reached = _max_dist(count, queue, dist)
            while done < K and radii[done] <= reached:
                out[done] = t
                done += 1


@njit(cache=True)
def fet_batch(indptr, nbr, eb, vb, src, tgt, inv, bu, bw, dist, radii, n_bits, rate,
              t_max, seeds):
    out = np.empty((seeds.size, radii.size))
    for r in range(seeds.size):
        fet_run(indptr, nbr, eb, vb, src, tgt, inv, bu, bw, dist, radii, n_bits, rate,
                t_max, seeds[r], out[r])
    return out
