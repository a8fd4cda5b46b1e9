"""Pure-Python max-flow kernels.

Mirrors the compiled ``_flowcore`` module function for function; selected at
import time when the extension is unavailable or ``FLEXAGG_PURE=1``.
All capacities are non-negative integers.
"""
from collections import deque

INF = 1 << 62


def _dinic(n, tails, heads, caps, s, t):
    # forward arc 2k, reverse arc 2k+1
    m = len(tails)
    to = [0] * (2 * m)
    cap = [0] * (2 * m)
    adj = [[] for _ in range(n)]
    for k in range(m):
        u, v, c = tails[k], heads[k], caps[k]
        to[2 * k] = v
        cap[2 * k] = c
        to[2 * k + 1] = u
        adj[u].append(2 * k)
        adj[v].append(2 * k + 1)

    flow = 0
    while True:
        level = [-1] * n
        level[s] = 0
        q = deque([s])
        while q:
            u = q.popleft()
            for e in adj[u]:
                if cap[e] > 0 and level[to[e]] < 0:
                    level[to[e]] = level[u] + 1
                    q.append(to[e])
        if level[t] < 0:
            return flow
        it = [0] * n
        while True:
            # iterative DFS for one augmenting path in the level graph
            path = []
            u = s
            while u != t:
                adj_u = adj[u]
                advanced = False
                while it[u] < len(adj_u):
                    e = adj_u[it[u]]
                    v = to[e]
                    if cap[e] > 0 and level[v] == level[u] + 1:
                        path.append(e)
                        u = v
                        advanced = True
                        break
                    it[u] += 1
                if not advanced:
                    if u == s:
                        break
                    level[u] = -1
                    e = path.pop()
                    u = to[e ^ 1]
                    it[u] += 1
            if u != t:
                break
            push = min(cap[e] for e in path)
            for e in path:
                cap[e] -= push
                cap[e ^ 1] += push
            flow += push


def max_flow(n, tails, heads, caps, s, t):
    """Maximum s-t flow value of the directed graph given as arc lists."""
    return _dinic(n, list(tails), list(heads), list(caps), s, t)


def schedule_feasible(energy, rate, start, end, lo, hi):
    """Decide whether sessions can be served exactly inside slot bounds.

    Session ``j`` must receive exactly ``energy[j]`` spread over slots
    ``start[j]..end[j]`` (inclusive, 0-based), at most ``rate[j]`` per slot.
    Slot ``k`` must carry a total in ``[lo[k], hi[k]]``.
    """
    n_sess = len(energy)
    n_slot = len(lo)
    total = 0
    for j in range(n_sess):
        e = energy[j]
        if e == 0:
            continue
        if e < 0:
            return False
        width = end[j] - start[j] + 1
        if start[j] < 0 or end[j] >= n_slot or width <= 0 or e > rate[j] * width:
            return False
        total += e
    lo_total = 0
    hi_total = 0
    for k in range(n_slot):
        if lo[k] > hi[k]:
            return False
        lo_total += lo[k]
        hi_total += hi[k]
    if total > hi_total or total < lo_total:
        return False

    src = 0
    sink = n_sess + n_slot + 1
    tails, heads, caps = [], [], []
    for j in range(n_sess):
        if energy[j] == 0:
            continue
        for k in range(start[j], end[j] + 1):
            tails.append(1 + j)
            heads.append(1 + n_sess + k)
            caps.append(rate[j])

    if lo_total == 0:
        for j in range(n_sess):
            if energy[j]:
                tails.append(src)
                heads.append(1 + j)
                caps.append(energy[j])
        for k in range(n_slot):
            tails.append(1 + n_sess + k)
            heads.append(sink)
            caps.append(hi[k])
        return _dinic(sink + 1, tails, heads, caps, src, sink) == total

    # circulation with lower bounds: src->session fixed at e, slot->sink in [lo, hi]
    ss = sink + 1
    tt = sink + 2
    for j in range(n_sess):
        if energy[j]:
            tails.append(ss)
            heads.append(1 + j)
            caps.append(energy[j])
    tails.append(src)
    heads.append(tt)
    caps.append(total)
    for k in range(n_slot):
        node = 1 + n_sess + k
        tails.append(node)
        heads.append(sink)
        caps.append(hi[k] - lo[k])
        if lo[k]:
            tails.append(node)
            heads.append(tt)
            caps.append(lo[k])
    tails.append(ss)
    heads.append(sink)
    caps.append(lo_total)
    tails.append(sink)
    heads.append(src)
    caps.append(INF)
    return _dinic(tt + 1, tails, heads, caps, ss, tt) == total + lo_total
