# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled max-flow kernels (Dinic on CSR adjacency).

Same signatures and results as ``_flow_py``.
"""
from libc.stdlib cimport malloc, free
from libc.stdint cimport int64_t

cdef int64_t INF = (<int64_t>1) << 62


cdef int64_t _dinic(int n, int m, int* tails, int* heads, int64_t* caps, int s, int t) except -1:
    cdef int* to = <int*>malloc(2 * m * sizeof(int))
    cdef int64_t* cap = <int64_t*>malloc(2 * m * sizeof(int64_t))
    cdef int* start = <int*>malloc((n + 1) * sizeof(int))
    cdef int* adj = <int*>malloc(2 * m * sizeof(int))
    cdef int* fill = <int*>malloc(n * sizeof(int))
    cdef int* level = <int*>malloc(n * sizeof(int))
    cdef int* it = <int*>malloc(n * sizeof(int))
    cdef int* queue = <int*>malloc(n * sizeof(int))
    cdef int* path = <int*>malloc((n + 1) * sizeof(int))
    if (to == NULL or cap == NULL or start == NULL or adj == NULL or fill == NULL
            or level == NULL or it == NULL or queue == NULL or path == NULL):
        free(to); free(cap); free(start); free(adj); free(fill)
        free(level); free(it); free(queue); free(path)
        raise MemoryError()

    cdef int k, u, v, e, head, tail_q, depth, i
    cdef int64_t flow = 0, push
    cdef bint advanced

    for u in range(n + 1):
        start[u] = 0
    for k in range(m):
        to[2 * k] = heads[k]
        cap[2 * k] = caps[k]
        to[2 * k + 1] = tails[k]
        cap[2 * k + 1] = 0
        start[tails[k] + 1] += 1
        start[heads[k] + 1] += 1
    for u in range(n):
        start[u + 1] += start[u]
        fill[u] = start[u]
    # insertion order matches the pure-Python adjacency lists
    for k in range(m):
        adj[fill[tails[k]]] = 2 * k
        fill[tails[k]] += 1
        adj[fill[heads[k]]] = 2 * k + 1
        fill[heads[k]] += 1

    while True:
        for u in range(n):
            level[u] = -1
        level[s] = 0
        head = 0
        tail_q = 0
        queue[tail_q] = s
        tail_q += 1
        while head < tail_q:
            u = queue[head]
            head += 1
            for i in range(start[u], start[u + 1]):
                e = adj[i]
                if cap[e] > 0 and level[to[e]] < 0:
                    level[to[e]] = level[u] + 1
                    queue[tail_q] = to[e]
                    tail_q += 1
        if level[t] < 0:
            break
        for u in range(n):
            it[u] = start[u]
        while True:
            depth = 0
            u = s
            while u != t:
                advanced = False
                while it[u] < start[u + 1]:
                    e = adj[it[u]]
                    v = to[e]
                    if cap[e] > 0 and level[v] == level[u] + 1:
                        path[depth] = e
                        depth += 1
                        u = v
                        advanced = True
                        break
                    it[u] += 1
                if not advanced:
                    if u == s:
                        break
                    level[u] = -1
                    depth -= 1
                    e = path[depth]
                    u = to[e ^ 1]
                    it[u] += 1
            if u != t:
                break
            push = INF
            for i in range(depth):
                if cap[path[i]] < push:
                    push = cap[path[i]]
            for i in range(depth):
                cap[path[i]] -= push
                cap[path[i] ^ 1] += push
            flow += push

    free(to); free(cap); free(start); free(adj); free(fill)
    free(level); free(it); free(queue); free(path)
    return flow


def max_flow(int n, tails, heads, caps, int s, int t):
    """Maximum s-t flow value of the directed graph given as arc lists."""
    cdef int m = len(tails)
    cdef int* ct = <int*>malloc(max(m, 1) * sizeof(int))
    cdef int* ch = <int*>malloc(max(m, 1) * sizeof(int))
    cdef int64_t* cc = <int64_t*>malloc(max(m, 1) * sizeof(int64_t))
    cdef int k
    try:
        for k in range(m):
            ct[k] = tails[k]
            ch[k] = heads[k]
            cc[k] = caps[k]
        return _dinic(n, m, ct, ch, cc, s, t)
    finally:
        free(ct); free(ch); free(cc)


def schedule_feasible(energy, rate, start, end, lo, hi):
    """Decide whether sessions can be served exactly inside slot bounds."""
    cdef int n_sess = len(energy)
    cdef int n_slot = len(lo)
    cdef int j, k, m, width, node
    cdef int64_t e, total = 0, lo_total = 0, hi_total = 0
    cdef int64_t* en = <int64_t*>malloc(max(n_sess, 1) * sizeof(int64_t))
    cdef int64_t* rt = <int64_t*>malloc(max(n_sess, 1) * sizeof(int64_t))
    cdef int* st = <int*>malloc(max(n_sess, 1) * sizeof(int))
    cdef int* nd = <int*>malloc(max(n_sess, 1) * sizeof(int))
    cdef int64_t* lw = <int64_t*>malloc(max(n_slot, 1) * sizeof(int64_t))
    cdef int64_t* hg = <int64_t*>malloc(max(n_slot, 1) * sizeof(int64_t))
    cdef int max_arcs
    cdef int* ct = NULL
    cdef int* ch = NULL
    cdef int64_t* cc = NULL
    cdef int src, sink, ss, tt
    try:
        for j in range(n_sess):
            en[j] = energy[j]
            rt[j] = rate[j]
            st[j] = start[j]
            nd[j] = end[j]
        for k in range(n_slot):
            lw[k] = lo[k]
            hg[k] = hi[k]

        for j in range(n_sess):
            e = en[j]
            if e == 0:
                continue
            if e < 0:
                return False
            width = nd[j] - st[j] + 1
            if st[j] < 0 or nd[j] >= n_slot or width <= 0 or e > rt[j] * width:
                return False
            total += e
        for k in range(n_slot):
            if lw[k] > hg[k]:
                return False
            lo_total += lw[k]
            hi_total += hg[k]
        if total > hi_total or total < lo_total:
            return False

        max_arcs = n_sess * n_slot + 2 * n_sess + 2 * n_slot + 4
        ct = <int*>malloc(max_arcs * sizeof(int))
        ch = <int*>malloc(max_arcs * sizeof(int))
        cc = <int64_t*>malloc(max_arcs * sizeof(int64_t))
        if ct == NULL or ch == NULL or cc == NULL:
            raise MemoryError()

        src = 0
        sink = n_sess + n_slot + 1
        m = 0
        for j in range(n_sess):
            if en[j] == 0:
                continue
            for k in range(st[j], nd[j] + 1):
                ct[m] = 1 + j; ch[m] = 1 + n_sess + k; cc[m] = rt[j]; m += 1

        if lo_total == 0:
            for j in range(n_sess):
                if en[j]:
                    ct[m] = src; ch[m] = 1 + j; cc[m] = en[j]; m += 1
            for k in range(n_slot):
                ct[m] = 1 + n_sess + k; ch[m] = sink; cc[m] = hg[k]; m += 1
            return _dinic(sink + 1, m, ct, ch, cc, src, sink) == total

        ss = sink + 1
        tt = sink + 2
        for j in range(n_sess):
            if en[j]:
                ct[m] = ss; ch[m] = 1 + j; cc[m] = en[j]; m += 1
        ct[m] = src; ch[m] = tt; cc[m] = total; m += 1
        for k in range(n_slot):
            node = 1 + n_sess + k
            ct[m] = node; ch[m] = sink; cc[m] = hg[k] - lw[k]; m += 1
            if lw[k]:
                ct[m] = node; ch[m] = tt; cc[m] = lw[k]; m += 1
        ct[m] = ss; ch[m] = sink; cc[m] = lo_total; m += 1
        ct[m] = sink; ch[m] = src; cc[m] = INF; m += 1
        return _dinic(tt + 1, m, ct, ch, cc, ss, tt) == total + lo_total
    finally:
        free(en); free(rt); free(st); free(nd); free(lw); free(hg)
        free(ct); free(ch); free(cc)
