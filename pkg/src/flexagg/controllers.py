"""Operator decision rules: penalized predictive control, MPC baseline, offline optima."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import MILLI, InstanceError, Scenario
from .mef import DEFAULT_NODE_BUDGET, BudgetExceeded, FlexibilityFeedback
from .netflow import cheapest_schedule


class DeadEndError(RuntimeError):
    """Feedback puts zero mass on every action: no feasible continuation."""


class InfeasibleInstance(ValueError):
    """The feasible trajectory set (or relaxed scheduling problem) is empty."""


@dataclass(frozen=True)
class PpcConfig:
    """``beta`` carries cost units: it prices one nat of lost flexibility."""

    beta: float | tuple[float, ...] = 1.0
    tie_break: str = "lowest-level"

    def __post_init__(self):
        betas = self.beta if isinstance(self.beta, tuple) else (self.beta,)
        if any(not (b > 0 and math.isfinite(b)) for b in betas):
            raise ValueError(f"tuning parameters must be positive and finite, got {self.beta!r}")
        if self.tie_break not in ("lowest-level", "highest-prob-then-lowest-level"):
            raise ValueError(f"unknown tie break {self.tie_break!r}")

    def beta_at(self, t: int) -> float:
        if isinstance(self.beta, tuple):
            return self.beta[t] if len(self.beta) > 1 else self.beta[0]
        return self.beta


def ppc_step(feedback: FlexibilityFeedback, costs: Sequence[float], config: PpcConfig, t: int) -> int:
    """Level index minimizing ``cost - beta * log p``; zero-probability levels are excluded."""
    beta = config.beta_at(t)
    best = None
    best_key = None
    for i, (c, p) in enumerate(zip(costs, feedback.probs)):
        if p <= 0:
            continue
        obj = c - beta * math.log(p)
        key = (obj, -p, i) if config.tie_break != "lowest-level" else (obj, i)
        if best_key is None or key < best_key:
            best, best_key = i, key
    if best is None:
        raise DeadEndError(f"slot {t + 1}: feedback has no admissible action")
    return best


@dataclass(frozen=True)
class MpcConfig:
    gamma: float = 1.0
    horizon_rule: str = "to-latest-departure"
    window: int | None = None
    on_infeasible: str = "zero"

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.horizon_rule not in ("to-latest-departure", "fixed-window"):
            raise ValueError(f"unknown horizon rule {self.horizon_rule!r}")
        if self.horizon_rule == "fixed-window" and not (self.window and self.window >= 1):
            raise ValueError("fixed-window horizon needs window >= 1")
        if self.on_infeasible not in ("zero", "best-effort"):
            raise ValueError(f"unknown infeasibility policy {self.on_infeasible!r}")


@dataclass
class MpcDecision:
    level: int
    schedule: dict[str, list[float]]
    feasible: bool
    planned_kwh: float
    shortfall_kwh: float = 0.0


def _round_down(agg, energy: int) -> int:
    best = None
    for i, (e, ok) in enumerate(zip(agg.level_energy, agg.allowed)):
        if ok and e <= energy and (best is None or e > agg.level_energy[best]):
            best = i
    if best is None:
        raise InstanceError("no admissible grid level at or below the planned aggregate")
    return best


def mpc_step(agg, state, prices: Sequence[float], config: MpcConfig, t: int) -> MpcDecision:
    """Receding-horizon min-cost schedule over present sessions; commit slot ``t`` only.

    Present sessions are those plugged in at slot ``t`` (0-based) with demand
    left; each must reach ``gamma * e`` in total. The committed aggregate is
    rounded down to the grid. If the relaxed problem is infeasible the
    decision is flagged and, by default, commits the lowest admissible level.
    """
    slot = t + 1
    present = [
        j
        for j in range(len(agg.sessions))
        if agg.arrival[j] <= slot <= agg.departure[j] and state.remaining[j] > 0
    ]
    lowest = _round_down(agg, agg.free_lo)
    if not present:
        return MpcDecision(lowest, {}, True, 0.0)
    last = max(agg.departure[j] for j in present)
    if config.horizon_rule == "fixed-window":
        last = min(last, slot + config.window - 1)
    n = last - slot + 1
    demand, rate, start, end = [], [], [], []
    for j in present:
        delivered = agg.energy[j] - state.remaining[j]
        target = max(0, math.floor(config.gamma * agg.energy[j]) - delivered)
        if config.horizon_rule == "fixed-window":
            # only what cannot be postponed past the window is due inside it
            later = max(0, agg.departure[j] - last) * agg.cap[j]
            target = max(0, target - later)
        demand.append(target)
        rate.append(agg.cap[j])
        start.append(0)
        end.append(min(agg.departure[j], last) - slot)
    sol = cheapest_schedule(demand, rate, start, end, list(prices[t : t + n]), [agg.free_hi] * n)
    sched = {agg.sessions[j].session_id: [x / MILLI for x in sol.schedule[i]] for i, j in enumerate(present)}
    shortfall = (sol.required - sol.delivered) / MILLI
    if not sol.feasible and config.on_infeasible == "zero":
        return MpcDecision(lowest, sched, False, sol.slot_energy[0] / MILLI, shortfall)
    return MpcDecision(_round_down(agg, sol.slot_energy[0]), sched, sol.feasible, sol.slot_energy[0] / MILLI, shortfall)


@dataclass
class OfflineSolution:
    trajectory: tuple[int, ...] | None
    cost: Fraction
    method: str
    slot_energy_kwh: tuple[float, ...] = ()

    @property
    def cost_float(self) -> float:
        return float(self.cost)


def offline_optimal_bruteforce(
    scenario: Scenario, oracle=None, node_budget: int | None = DEFAULT_NODE_BUDGET
) -> OfflineSolution:
    """Exact minimum-cost member of the feasible set, lexicographically smallest on ties.

    Enumerates the feasible tree with memoized cost-to-go per oracle state.
    """
    oracle = oracle if oracle is not None else scenario.oracle()
    horizon, n_levels = oracle.horizon, oracle.n_levels
    cost_tab = [
        [scenario.costs.cost_exact(t, a, scenario.grid, scenario.time) for a in range(n_levels)]
        for t in range(horizon)
    ]
    memo: dict = {}
    visited = [0]

    def best(state, t):
        key = oracle.key(state, t)
        if key in memo:
            return memo[key]
        visited[0] += 1
        if node_budget is not None and visited[0] > node_budget:
            raise BudgetExceeded(f"enumeration exceeded {node_budget} nodes")
        if t == horizon:
            out = (Fraction(0), ()) if oracle.complete(state) else None
        elif not oracle.viable(state, t):
            out = None
        else:
            out = None
            for a in range(n_levels):
                child = oracle.advance(state, t, a)
                if child is None:
                    continue
                sub = best(child, t + 1)
                if sub is None:
                    continue
                cand = (cost_tab[t][a] + sub[0], (a,) + sub[1])
                if out is None or cand[0] < out[0]:
                    out = cand
        memo[key] = out
        return out

    res = best(oracle.root(), 0)
    if res is None:
        raise InfeasibleInstance("feasible trajectory set is empty")
    return OfflineSolution(res[1], res[0], "brute-force")


def offline_optimal_flow(scenario: Scenario, demand_scale: float = 1.0) -> OfflineSolution:
    """Continuous-aggregate optimum for linear prices (lower bound on the grid optimum).

    Slot aggregates are free in ``[0, max admissible level]``; demands are
    scaled by ``demand_scale``. The trajectory is filled in when every slot
    aggregate lands exactly on the grid.
    """
    if scenario.costs.kind != "linear":
        raise InstanceError("offline flow optimum needs linear prices")
    agg = scenario.aggregator
    demand = [math.floor(demand_scale * e) for e in agg.energy]
    start = [a - 1 for a in agg.arrival]
    end = [d - 1 for d in agg.departure]
    sol = cheapest_schedule(
        demand, list(agg.cap), start, end, list(scenario.costs.values), [agg.free_hi] * agg.horizon
    )
    if not sol.feasible:
        raise InfeasibleInstance("demands cannot be met even with a continuous aggregate")
    traj = []
    for e in sol.slot_energy:
        hit = [i for i, (le, ok) in enumerate(zip(agg.level_energy, agg.allowed)) if ok and le == e]
        if not hit:
            traj = None
            break
        traj.append(hit[0])
    return OfflineSolution(
        tuple(traj) if traj is not None else None,
        sol.cost,
        "min-cost-flow",
        tuple(e / MILLI for e in sol.slot_energy),
    )


# -- controllers for the closed loop ------------------------------------------


class PPC:
    needs_feedback = True

    def __init__(self, config: PpcConfig | None = None):
        self.config = config or PpcConfig()
        self.name = "ppc"

    def decide(self, t, feedback, scenario, state, prefix):
        return ppc_step(feedback, scenario.costs.row(t, scenario.grid, scenario.time), self.config, t), {}


class MPC:
    needs_feedback = False

    def __init__(self, config: MpcConfig | None = None):
        self.config = config or MpcConfig()
        self.name = "mpc"

    def decide(self, t, feedback, scenario, state, prefix):
        if scenario.costs.kind != "linear":
            raise InstanceError("MPC baseline needs linear prices")
        d = mpc_step(scenario.aggregator, state, scenario.costs.values, self.config, t)
        info = {} if d.feasible else {"mpc_infeasible": True, "shortfall_kwh": d.shortfall_kwh}
        return d.level, info


class Replay:
    """Play back a precomputed trajectory (offline optima)."""

    needs_feedback = False

    def __init__(self, trajectory: Sequence[int], name: str = "offline"):
        self.trajectory = tuple(trajectory)
        self.name = name

    def decide(self, t, feedback, scenario, state, prefix):
        return self.trajectory[t], {}


@dataclass
class SweepRow:
    beta: float
    trajectory: tuple[int, ...]
    cost: float
    mpe: float
    mse: float
    feasible: bool
    non_monotone: bool = False
    error: str | None = None


def log_beta_grid(lo: float = 1e-3, hi: float = 1e6, n: int = 24) -> list[float]:
    return [float(b) for b in np.logspace(math.log10(lo), math.log10(hi), n)]


def beta_sweep(scenario: Scenario, betas: Sequence[float], provider=None, node_budget=DEFAULT_NODE_BUDGET) -> list[SweepRow]:
    """Closed-loop PPC at each beta, sharing one exact provider across runs.

    Larger beta buys flexibility with cost, but cost need not be monotone in
    beta; a row cheaper than its predecessor is flagged for inspection only.
    """
    from .harness import run_closed_loop
    from .mef import ExactProvider

    if not betas:
        return []
    provider = provider if provider is not None else ExactProvider(scenario.oracle(), node_budget)
    rows: list[SweepRow] = []
    for beta in betas:
        rep = run_closed_loop(scenario, provider, PPC(PpcConfig(beta=float(beta))))
        rows.append(
            SweepRow(float(beta), rep.trajectory, rep.total_cost, rep.mpe, rep.mse, rep.feasible, error=rep.aborted)
        )
    for prev, row in zip(rows, rows[1:]):
        row.non_monotone = row.cost < prev.cost
    return rows
