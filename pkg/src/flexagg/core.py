"""Problem-instance types shared by controllers and feedback providers.

Actions are handled internally as indices into ``ActionGrid.levels``; physical
kW values appear only at the I/O boundary. Energies are kept as integer
milli-kWh so feasibility questions can be answered exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Hashable, Protocol, Sequence

MILLI = 1000  # energy quanta per kWh


class InstanceError(ValueError):
    """A problem instance or trajectory violates a structural precondition."""


def to_milli(kwh: float) -> int:
    return int(round(kwh * MILLI))


@dataclass(frozen=True)
class TimeGrid:
    horizon: int
    slot_hours: float

    def __post_init__(self):
        if not isinstance(self.horizon, int) or self.horizon < 1:
            raise InstanceError(f"horizon must be a positive integer, got {self.horizon!r}")
        if not self.slot_hours > 0:
            raise InstanceError(f"slot duration must be positive, got {self.slot_hours!r}")


@dataclass(frozen=True)
class ActionGrid:
    """Discrete aggregate power levels (kW) and an optional per-slot energy cap (kWh)."""

    levels: tuple[float, ...]
    cap_kwh: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(float(x) for x in self.levels))

    def __len__(self) -> int:
        return len(self.levels)

    def energy_milli(self, slot_hours: float) -> tuple[int, ...]:
        """Energy delivered by each level over one slot, in milli-kWh."""
        return tuple(to_milli(level * slot_hours) for level in self.levels)

    def allowed(self, slot_hours: float) -> tuple[bool, ...]:
        """Which levels respect the operational cap."""
        if self.cap_kwh is None:
            return (True,) * len(self.levels)
        cap = to_milli(self.cap_kwh)
        return tuple(e <= cap for e in self.energy_milli(slot_hours))

    def index_of(self, level_kw: float, tol: float = 1e-9) -> int:
        for i, level in enumerate(self.levels):
            if abs(level - level_kw) <= tol * max(1.0, abs(level)):
                return i
        raise InstanceError(f"{level_kw} kW is not on the action grid {self.levels}")


@dataclass(frozen=True)
class CostSchedule:
    """Per-slot cost functions of the action level.

    ``kind="linear"``: ``values[t]`` is a price per kWh and the cost of level
    ``u`` is ``price * u * slot_hours``. ``kind="tabulated"``: ``values[t][i]``
    is the cost of grid level ``i`` at slot ``t``.
    """

    kind: str
    values: tuple

    def __post_init__(self):
        if self.kind == "linear":
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        elif self.kind == "tabulated":
            object.__setattr__(
                self, "values", tuple(tuple(float(v) for v in row) for row in self.values)
            )
        else:
            raise InstanceError(f"unknown cost kind {self.kind!r}")

    def __len__(self) -> int:
        return len(self.values)

    def cost(self, t: int, level_index: int, grid: ActionGrid, time: TimeGrid) -> float:
        if self.kind == "linear":
            return self.values[t] * grid.levels[level_index] * time.slot_hours
        return self.values[t][level_index]

    def cost_exact(self, t: int, level_index: int, grid: ActionGrid, time: TimeGrid) -> Fraction:
        """Exact rational cost; linear costs use the milli-kWh quantized energy."""
        if self.kind == "linear":
            energy = grid.energy_milli(time.slot_hours)[level_index]
            return Fraction(self.values[t]) * Fraction(energy, MILLI)
        return Fraction(self.values[t][level_index])

    def row(self, t: int, grid: ActionGrid, time: TimeGrid) -> list[float]:
        return [self.cost(t, i, grid, time) for i in range(len(grid))]


class ConstraintOracle(Protocol):
    """Feasibility contract of an aggregator over discrete action trajectories.

    States are opaque immutable values. ``advance`` returns ``None`` when the
    action itself breaks a constraint. ``viable`` may over-approximate (it is a
    pruning bound) but must never reject a state that has a feasible
    completion; ``complete`` is exact.
    """

    horizon: int
    n_levels: int

    def root(self) -> Any: ...

    def advance(self, state: Any, t: int, action: int) -> Any | None: ...

    def viable(self, state: Any, t: int) -> bool: ...

    def complete(self, state: Any) -> bool: ...

    def key(self, state: Any, t: int) -> Hashable: ...

    def is_admissible(self, prefix: Sequence[int]) -> bool: ...

    def is_complete_feasible(self, full: Sequence[int]) -> bool: ...


class OracleBase:
    """Replay-based ``is_admissible``/``is_complete_feasible`` for oracles."""

    horizon: int
    n_levels: int

    def replay(self, prefix: Sequence[int]):
        if len(prefix) > self.horizon:
            raise InstanceError(f"prefix of length {len(prefix)} exceeds horizon {self.horizon}")
        state = self.root()
        for t, a in enumerate(prefix):
            if not 0 <= a < self.n_levels:
                raise InstanceError(f"action index {a} outside grid of size {self.n_levels}")
            state = self.advance(state, t, a)
            if state is None:
                return None
        return state

    def is_admissible(self, prefix: Sequence[int]) -> bool:
        state = self.replay(prefix)
        if state is None:
            return False
        if len(prefix) == self.horizon:
            return self.complete(state)
        return self.viable(state, len(prefix))

    def is_complete_feasible(self, full: Sequence[int]) -> bool:
        if len(full) != self.horizon:
            raise InstanceError(f"trajectory length {len(full)} != horizon {self.horizon}")
        state = self.replay(full)
        return state is not None and self.complete(state)


class UnconstrainedOracle(OracleBase):
    """Every trajectory on the (cap-filtered) grid is feasible."""

    def __init__(self, horizon: int, n_levels: int, allowed: Sequence[bool] | None = None):
        self.horizon = horizon
        self.n_levels = n_levels
        self.allowed = tuple(allowed) if allowed is not None else (True,) * n_levels

    def root(self):
        return 0

    def advance(self, state, t, action):
        return state + 1 if self.allowed[action] else None

    def viable(self, state, t):
        return True

    def complete(self, state):
        return state == self.horizon

    def key(self, state, t):
        return t


@dataclass(frozen=True)
class Scenario:
    """Immutable problem instance: time grid, action grid, costs, aggregator."""

    time: TimeGrid
    grid: ActionGrid
    costs: CostSchedule
    aggregator: Any = None
    name: str = "scenario"
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def horizon(self) -> int:
        return self.time.horizon

    def cost(self, t: int, level_index: int) -> float:
        return self.costs.cost(t, level_index, self.grid, self.time)

    def oracle(self, semantics: str | None = None):
        if self.aggregator is None:
            return UnconstrainedOracle(
                self.horizon, len(self.grid), self.grid.allowed(self.time.slot_hours)
            )
        return self.aggregator.oracle(semantics)


def evaluate_cost(scenario: Scenario, traj: Sequence[int], exact: bool = False):
    """Cumulative cost of a full trajectory of level indices."""
    if len(traj) != scenario.horizon:
        raise InstanceError(f"trajectory length {len(traj)} != horizon {scenario.horizon}")
    if exact:
        return sum(
            (scenario.costs.cost_exact(t, a, scenario.grid, scenario.time) for t, a in enumerate(traj)),
            Fraction(0),
        )
    return math.fsum(scenario.cost(t, a) for t, a in enumerate(traj))


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str
    value: Any

    def __str__(self) -> str:
        return f"{self.field}: {self.rule} (got {self.value!r})"


def validate_scenario(scenario: Scenario) -> list[Violation]:
    """Collect every statically checkable invariant violation; empty list means valid."""
    out: list[Violation] = []
    time, grid, costs = scenario.time, scenario.grid, scenario.costs
    levels = grid.levels
    if not levels:
        out.append(Violation("action_levels_kw", "levels empty", levels))
    if any(b <= a for a, b in zip(levels, levels[1:])):
        out.append(Violation("action_levels_kw", "levels not increasing", levels))
    if any(x < 0 for x in levels):
        out.append(Violation("action_levels_kw", "negative level", levels))
    if grid.cap_kwh is not None and levels and not any(grid.allowed(time.slot_hours)):
        out.append(Violation("operational_cap_kwh", "no level within cap", grid.cap_kwh))
    if len(costs) != time.horizon:
        out.append(Violation("costs", "cost length", len(costs)))
    else:
        for t in range(time.horizon):
            if costs.kind == "tabulated" and len(costs.values[t]) != len(levels):
                out.append(Violation(f"costs[{t}]", "tabulated row length", len(costs.values[t])))
                continue
            for i in range(len(levels)):
                c = costs.cost(t, i, grid, time)
                if not math.isfinite(c) or c < 0:
                    out.append(Violation(f"costs[{t}]", "cost negative or non-finite", c))
                    break
    if scenario.aggregator is not None and hasattr(scenario.aggregator, "violations"):
        out.extend(scenario.aggregator.violations())
    return out
