"""Min-cost flow by successive shortest paths with Dijkstra potentials.

Capacities and costs are integers, so optima are exact. Used for the MPC
baseline and the continuous offline lower bound on EV instances.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .core import MILLI


@dataclass
class FlowResult:
    value: int
    cost: int
    arc_flow: list[int]


def min_cost_flow(n: int, arcs: Sequence[tuple[int, int, int, int]], s: int, t: int, required: int) -> FlowResult:
    """Send up to ``required`` units from ``s`` to ``t`` at minimum cost.

    ``arcs`` holds ``(tail, head, capacity, cost)`` with non-negative integer
    costs. Returns the achieved value, which is below ``required`` only when
    the network cannot carry more.
    """
    m = len(arcs)
    to = [0] * (2 * m)
    cap = [0] * (2 * m)
    cost = [0] * (2 * m)
    adj: list[list[int]] = [[] for _ in range(n)]
    for k, (u, v, c, w) in enumerate(arcs):
        if w < 0:
            raise ValueError("arc costs must be non-negative")
        to[2 * k], cap[2 * k], cost[2 * k] = v, c, w
        to[2 * k + 1], cap[2 * k + 1], cost[2 * k + 1] = u, 0, -w
        adj[u].append(2 * k)
        adj[v].append(2 * k + 1)

    pot = [0] * n
    flow = 0
    total = 0
    while flow < required:
        dist: list = [None] * n
        prev = [-1] * n
        dist[s] = 0
        heap = [(0, s)]
        while heap:
            d, u = heapq.heappop(heap)
            if d != dist[u]:
                continue
            for e in adj[u]:
                if cap[e] <= 0:
                    continue
                v = to[e]
                nd = d + cost[e] + pot[u] - pot[v]
                if dist[v] is None or nd < dist[v]:
                    dist[v] = nd
                    prev[v] = e
                    heapq.heappush(heap, (nd, v))
        if dist[t] is None:
            break
        # capping at dist[t] keeps reduced costs non-negative for unreached nodes
        dt = dist[t]
        for v in range(n):
            dv = dist[v]
            pot[v] += dt if dv is None or dv > dt else dv
        push = required - flow
        v = t
        while v != s:
            e = prev[v]
            push = min(push, cap[e])
            v = to[e ^ 1]
        v = t
        while v != s:
            e = prev[v]
            cap[e] -= push
            cap[e ^ 1] += push
            total += push * cost[e]
            v = to[e ^ 1]
        flow += push
    return FlowResult(flow, total, [cap[2 * k + 1] for k in range(m)])


def integer_prices(prices: Sequence[float]) -> tuple[list[int], int]:
    """Scale float prices to integers exactly; returns (scaled, denominator)."""
    fr = [Fraction(p) for p in prices]
    den = 1
    for f in fr:
        den = den * f.denominator // math.gcd(den, f.denominator)
    return [int(f * den) for f in fr], den


@dataclass
class TransportSolution:
    """Per-slot aggregate and per-session schedule (milli-kWh) of a min-cost plan."""

    slot_energy: list[int]
    schedule: dict[int, list[int]]
    delivered: int
    required: int
    cost: Fraction

    @property
    def feasible(self) -> bool:
        return self.delivered == self.required


def cheapest_schedule(
    demand: Sequence[int],
    rate: Sequence[int],
    start: Sequence[int],
    end: Sequence[int],
    prices: Sequence[float],
    slot_cap: Sequence[int],
) -> TransportSolution:
    """Min-cost delivery of ``demand[j]`` within slots ``start[j]..end[j]``.

    Slot ``k`` costs ``prices[k]`` per kWh and carries at most ``slot_cap[k]``.
    """
    n_sess, n_slot = len(demand), len(prices)
    scaled, den = integer_prices(prices)
    src, sink = 0, 1 + n_sess + n_slot
    arcs = []
    session_arcs = []
    for j in range(n_sess):
        if demand[j] <= 0:
            continue
        arcs.append((src, 1 + j, demand[j], 0))
        for k in range(max(start[j], 0), min(end[j], n_slot - 1) + 1):
            session_arcs.append((j, k, len(arcs)))
            arcs.append((1 + j, 1 + n_sess + k, rate[j], 0))
    slot_arc0 = len(arcs)
    for k in range(n_slot):
        arcs.append((1 + n_sess + k, sink, slot_cap[k], scaled[k]))
    required = sum(d for d in demand if d > 0)
    res = min_cost_flow(sink + 1, arcs, src, sink, required)
    slot_energy = [res.arc_flow[slot_arc0 + k] for k in range(n_slot)]
    schedule = {j: [0] * n_slot for j in range(n_sess)}
    for j, k, idx in session_arcs:
        schedule[j][k] = res.arc_flow[idx]
    cost = Fraction(res.cost, den * MILLI)
    return TransportSolution(slot_energy, schedule, res.value, required, cost)
