"""Synthetic EV instances: a small enumerable corpus and day-scale fleets."""
from __future__ import annotations

import math

import numpy as np

from .core import ActionGrid, CostSchedule, Scenario, TimeGrid
from .ev import ChargingSession, EVAggregator
from .mef import BudgetExceeded, count_continuations


def example1(prices=(1.0, 1.0, 1.0)) -> Scenario:
    """Three slots, one session (1, 3, 1 kWh, 1 kW), levels {0, 1} kW, Δ = 1 h."""
    time = TimeGrid(3, 1.0)
    grid = ActionGrid((0.0, 1.0))
    agg = EVAggregator([ChargingSession("ev1", 1, 3, 1.0, 1.0)], time, grid)
    return Scenario(time, grid, CostSchedule("linear", tuple(prices)), agg, name="example1")


def find_witness(oracle, rng: np.random.Generator, node_budget: int = 100_000):
    """Some feasible full trajectory, found by randomized backtracking; None if none."""
    horizon = oracle.horizon
    visited = 0

    def go(state, t, path):
        nonlocal visited
        visited += 1
        if visited > node_budget:
            raise BudgetExceeded("witness search exceeded budget")
        if t == horizon:
            return tuple(path) if oracle.complete(state) else None
        if not oracle.viable(state, t):
            return None
        for a in rng.permutation(oracle.n_levels):
            child = oracle.advance(state, t, int(a))
            if child is None:
                continue
            found = go(child, t + 1, path + [int(a)])
            if found is not None:
                return found
        return None

    return go(oracle.root(), 0, [])


def random_small_ev(rng: np.random.Generator, max_space: int = 100_000, name: str = "small") -> Scenario:
    """Random EV instance with ``|U|^T <= max_space`` and a non-empty feasible set.

    Integer kWh energies and rates, Δ = 1 h, linear prices on a 0.01 grid.
    """
    while True:
        n_levels = int(rng.choice([2, 3, 4]))
        t_max = int(math.floor(math.log(max_space) / math.log(n_levels) + 1e-9))
        horizon = int(rng.integers(3, min(t_max, 8) + 1))
        step = int(rng.choice([1, 1, 2]))
        levels = tuple(float(step * i) for i in range(n_levels))
        time = TimeGrid(horizon, 1.0)
        grid = ActionGrid(levels)
        sessions = []
        half = (horizon + 1) // 2
        for j in range(int(rng.integers(1, 4))):
            a = int(rng.integers(1, half + 1))
            d = int(rng.integers(max(a, half), horizon + 1))
            rate = float(rng.choice([1, 2, 3]))
            cap = int((d - a + 1) * rate)
            e = float(rng.integers(1, max(1, cap // 2) + 1))
            sessions.append(ChargingSession(f"s{j}", a, d, e, rate))
        prices = tuple(round(float(p), 2) for p in rng.uniform(0.1, 1.0, horizon))
        agg = EVAggregator(sessions, time, grid)
        sc = Scenario(time, grid, CostSchedule("linear", prices), agg, name=name)
        if count_continuations(sc.oracle("policy"), ()) > 0:
            return sc


def small_corpus(n: int = 24, seed: int = 2024) -> list[Scenario]:
    rng = np.random.default_rng(seed)
    return [random_small_ev(rng, name=f"small-{seed}-{i:02d}") for i in range(n)]


def daily_prices(horizon: int, rng: np.random.Generator) -> tuple[float, ...]:
    """Day-ahead-like price curve ($/kWh): midday dip, evening peak, noise."""
    hours = np.arange(horizon) * 24.0 / horizon
    base = 0.28 + 0.06 * np.cos((hours - 18.0) / 24.0 * 2 * np.pi) - 0.05 * np.exp(-((hours - 13.0) ** 2) / 8.0)
    noisy = base + rng.normal(0.0, 0.015, horizon)
    return tuple(round(float(max(p, 0.01)), 3) for p in noisy)


def fleet_scenario(
    seed: int,
    n_sessions: int = 30,
    horizon: int = 24,
    n_levels: int = 10,
    unit_kw: float = 7.0,
    name: str | None = None,
) -> Scenario:
    """Workplace-style charging day on an hourly grid.

    Levels are ``unit_kw * {0..n_levels-1}``; rates and energies are multiples
    of one unit so exact tracking is possible. Energies are trimmed until a
    feasible trajectory under LLF disaggregation is found.
    """
    rng = np.random.default_rng(seed)
    time = TimeGrid(horizon, 24.0 / horizon)
    grid = ActionGrid(tuple(unit_kw * i for i in range(n_levels)))
    unit_kwh = unit_kw * time.slot_hours
    sessions = []
    for j in range(n_sessions):
        a = int(np.clip(round(rng.normal(0.38 * horizon, 0.08 * horizon)), 1, horizon - 2))
        stay = int(np.clip(round(rng.normal(0.33 * horizon, 0.1 * horizon)), 2, horizon))
        d = min(horizon, a + stay - 1)
        mult = int(rng.choice([1, 2], p=[0.8, 0.2]))
        window_units = (d - a + 1) * mult
        e_units = int(rng.integers(1, min(window_units, 5) + 1))
        sessions.append([f"ev{j:02d}", a, d, e_units, mult])
    prices = daily_prices(horizon, rng)
    while True:
        built = [ChargingSession(s, a, d, e * unit_kwh, m * unit_kw) for s, a, d, e, m in sessions if e > 0]
        agg = EVAggregator(built, time, grid)
        sc = Scenario(time, grid, CostSchedule("linear", prices), agg, name=name or f"fleet-{seed}")
        try:
            if find_witness(sc.oracle("policy"), rng, 20_000) is not None:
                return sc
        except BudgetExceeded:
            pass
        # trim the largest remaining demand and retry
        k = max(range(len(sessions)), key=lambda i: (sessions[i][3], -i))
        sessions[k][3] -= 1
