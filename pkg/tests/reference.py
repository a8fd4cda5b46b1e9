"""Independent brute-force references used as test oracles.

Nothing here shares code with the flow kernels or the memoized counter: the
schedule check enumerates per-session schedules directly, and the LLF replay
is a separate, straightforward re-implementation.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction


def _compositions(total: int, slots: list[int], cap: int, step: int):
    """All ways to place ``total`` over ``slots`` in multiples of ``step`` up to ``cap`` each."""
    units, cap_units = total // step, cap // step
    out = []

    def rec(i, left, acc):
        if i == len(slots):
            if left == 0:
                out.append(tuple(acc))
            return
        rest = len(slots) - i - 1
        for x in range(0, min(cap_units, left) + 1):
            if left - x <= rest * cap_units:
                rec(i + 1, left - x, acc + [x * step])

    rec(0, units, [])
    return out


def granularity(agg) -> int:
    g = 0
    for v in list(agg.energy) + list(agg.cap) + list(agg.level_energy):
        g = math.gcd(g, v)
    return g or 1


def candidate_schedules(agg):
    """Per-session schedule lists (dicts slot->energy) at the instance granularity."""
    step = granularity(agg)
    lists = []
    for j in range(len(agg.sessions)):
        slots = list(range(agg.arrival[j] - 1, agg.departure[j]))
        cap = agg.cap[j] - agg.cap[j] % step
        lists.append([dict(zip(slots, c)) for c in _compositions(agg.energy[j], slots, cap, step)])
    return lists


def n_candidates(agg) -> int:
    return math.prod(len(x) for x in candidate_schedules(agg))


def achievable_totals(agg) -> set[tuple[int, ...]]:
    """Every per-slot aggregate reachable by some combination of session schedules."""
    out = set()
    for combo in itertools.product(*candidate_schedules(agg)):
        totals = [0] * agg.horizon
        for sched in combo:
            for k, v in sched.items():
                totals[k] += v
        out.add(tuple(totals))
    return out


def schedule_exists(agg, traj, totals=None) -> bool:
    """Exhaustive search for per-session schedules that track ``traj`` exactly."""
    if any(not agg.allowed[a] for a in traj):
        return False
    totals = achievable_totals(agg) if totals is None else totals
    return tuple(agg.level_energy[a] for a in traj) in totals


def llf_replay(agg, traj):
    """Replay LLF by hand; returns (feasible, delivered per slot in milli-kWh)."""
    rem = list(agg.energy)
    delivered = []
    for t, a in enumerate(traj):
        slot = t + 1
        amount = agg.level_energy[a]
        active = [
            j for j in range(len(rem)) if agg.arrival[j] <= slot <= agg.departure[j] and rem[j] > 0
        ]
        active.sort(
            key=lambda j: (
                Fraction(agg.departure[j] - t) - Fraction(rem[j], agg.cap[j]),
                agg.departure[j],
                agg.sessions[j].session_id,
            )
        )
        left = amount
        for j in active:
            give = min(left, agg.cap[j], rem[j])
            rem[j] -= give
            left -= give
        delivered.append(amount - left)
        if left or any(agg.departure[j] == slot and rem[j] for j in range(len(rem))):
            return False, delivered
        if not agg.allowed[a]:
            return False, delivered
    return not any(rem), delivered


def all_trajectories(n_levels: int, horizon: int):
    return itertools.product(range(n_levels), repeat=horizon)


def feasible_set(scenario, semantics: str = "policy") -> set[tuple[int, ...]]:
    agg = scenario.aggregator
    if semantics == "policy":
        test = lambda u: llf_replay(agg, u)[0]  # noqa: E731
    else:
        totals = achievable_totals(agg)
        test = lambda u: schedule_exists(agg, u, totals)  # noqa: E731
    return {u for u in all_trajectories(len(scenario.grid), scenario.horizon) if test(u)}
