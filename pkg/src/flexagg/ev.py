"""EV charging aggregator: session bookkeeping, LLF disaggregation and feasibility.

Two readings of the feasible trajectory set are exposed as oracles:

``policy``
    trajectories the aggregator actually realizes when it disaggregates every
    action with least-laxity-first: each slot is tracked exactly and every
    session is fully served by its departure. Its state is the physical
    remaining-energy vector, so continuation counts memoize on it.
``schedule``
    trajectories for which *some* per-session schedule exists (a max-flow over
    the session x slot network with the prefix pinned). This is a superset of
    ``policy``; the two differ when LLF commits energy to the wrong session.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from ._kernels import schedule_feasible
from .core import MILLI, ActionGrid, InstanceError, OracleBase, TimeGrid, Violation, to_milli

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChargingSession:
    """One EV: arrival/departure are 1-based slot indices, inclusive."""

    session_id: str
    arrival: int
    departure: int
    energy_kwh: float
    rate_kw: float


@dataclass(frozen=True)
class EVState:
    """Remaining demand (milli-kWh) of every session after ``t`` slots."""

    t: int
    remaining: tuple[int, ...]


@dataclass(frozen=True)
class DisaggregationResult:
    active_ids: tuple[str, ...]
    per_session_kwh: tuple[float, ...]
    delivered_kwh: float
    undelivered_kwh: float
    delivered_milli: int = 0
    undelivered_milli: int = 0


class EVAggregator:
    """Fleet of charging sessions on a fixed time and action grid."""

    def __init__(
        self,
        sessions: Sequence[ChargingSession],
        time: TimeGrid,
        grid: ActionGrid,
        semantics: str = "policy",
    ):
        self.sessions = tuple(sessions)
        self.time = time
        self.grid = grid
        self.semantics = semantics
        self.horizon = time.horizon
        self.n_levels = len(grid)
        self.energy = tuple(to_milli(s.energy_kwh) for s in self.sessions)
        self.cap = tuple(to_milli(s.rate_kw * time.slot_hours) for s in self.sessions)
        self.arrival = tuple(s.arrival for s in self.sessions)
        self.departure = tuple(s.departure for s in self.sessions)
        self.level_energy = grid.energy_milli(time.slot_hours)
        self.allowed = grid.allowed(time.slot_hours)
        allowed_energy = [e for e, ok in zip(self.level_energy, self.allowed) if ok]
        self.free_lo = min(allowed_energy) if allowed_energy else 0
        self.free_hi = max(allowed_energy) if allowed_energy else 0

    # -- validation ------------------------------------------------------
    def violations(self) -> list[Violation]:
        out = []
        seen = set()
        for s in self.sessions:
            f = f"session[{s.session_id}]"
            if s.session_id in seen:
                out.append(Violation(f, "duplicate session id", s.session_id))
            seen.add(s.session_id)
            if not 1 <= s.arrival <= s.departure <= self.horizon:
                out.append(Violation(f, "window outside 1<=a<=d<=T", (s.arrival, s.departure)))
            if not s.energy_kwh > 0:
                out.append(Violation(f, "energy must be positive", s.energy_kwh))
            if not s.rate_kw > 0:
                out.append(Violation(f, "peak rate must be positive", s.rate_kw))
        return out

    # -- dynamics --------------------------------------------------------
    def initial_state(self) -> EVState:
        return EVState(0, self.energy)

    def total_demand_kwh(self) -> float:
        return sum(self.energy) / MILLI

    def active(self, state: EVState) -> list[int]:
        """Sessions plugged in during the next slot that still need energy."""
        slot = state.t + 1
        return [
            j
            for j in range(len(self.sessions))
            if self.arrival[j] <= slot <= self.departure[j] and state.remaining[j] > 0
        ]

    def laxity(self, state: EVState, j: int) -> Fraction:
        """Remaining slots minus slots needed at peak rate (scaled by 1/Δ)."""
        slots_left = self.departure[j] - state.t
        return Fraction(slots_left) - Fraction(state.remaining[j], self.cap[j])

    def llf_order(self, state: EVState) -> list[int]:
        return sorted(
            self.active(state),
            key=lambda j: (self.laxity(state, j), self.departure[j], self.sessions[j].session_id),
        )

    def allocate(self, state: EVState, amount: int) -> tuple[tuple[int, ...], list[tuple[int, int]], int]:
        """LLF split of ``amount`` milli-kWh; returns (new remaining, grants, leftover)."""
        remaining = list(state.remaining)
        grants = []
        left = amount
        for j in self.llf_order(state):
            give = min(left, self.cap[j], remaining[j])
            grants.append((j, give))
            remaining[j] -= give
            left -= give
        return tuple(remaining), grants, left

    def advance(self, state: EVState, level_index: int) -> tuple[EVState, DisaggregationResult]:
        """Apply one operator action; always succeeds and reports any shortfall."""
        amount = self.level_energy[level_index]
        remaining, grants, left = self.allocate(state, amount)
        ids = tuple(self.sessions[j].session_id for j, _ in grants)
        per = tuple(g / MILLI for _, g in grants)
        delivered = amount - left
        res = DisaggregationResult(ids, per, delivered / MILLI, left / MILLI, delivered, left)
        return EVState(state.t + 1, remaining), res

    def missed_deadline(self, state: EVState) -> list[str]:
        """Sessions whose departure slot has passed with demand left."""
        return [
            self.sessions[j].session_id
            for j in range(len(self.sessions))
            if self.departure[j] <= state.t and state.remaining[j] > 0
        ]

    # -- feasibility -----------------------------------------------------
    def viable_from(self, state: EVState) -> bool:
        """Can the remaining demand still be met from ``state`` on the grid range?

        Free slots take any aggregate in [min level, max level] (a continuous
        relaxation of the grid), so this is exact only when no slots remain.
        """
        t = state.t
        n_free = self.horizon - t
        if n_free == 0:
            return not any(state.remaining)
        energy, rate, start, end = [], [], [], []
        for j, rem in enumerate(state.remaining):
            if rem == 0:
                continue
            if self.departure[j] <= t:
                return False
            energy.append(rem)
            rate.append(self.cap[j])
            start.append(max(self.arrival[j], t + 1) - t - 1)
            end.append(self.departure[j] - t - 1)
        return bool(
            schedule_feasible(energy, rate, start, end, [self.free_lo] * n_free, [self.free_hi] * n_free)
        )

    def _schedule_check(self, prefix: Sequence[int]) -> bool:
        if any(not self.allowed[a] for a in prefix):
            return False
        lo = [self.level_energy[a] for a in prefix] + [self.free_lo] * (self.horizon - len(prefix))
        hi = [self.level_energy[a] for a in prefix] + [self.free_hi] * (self.horizon - len(prefix))
        start = [a - 1 for a in self.arrival]
        end = [d - 1 for d in self.departure]
        return bool(schedule_feasible(list(self.energy), list(self.cap), start, end, lo, hi))

    def is_admissible(self, prefix: Sequence[int]) -> bool:
        """Some per-session schedule tracks ``prefix`` exactly and meets every demand."""
        if len(prefix) > self.horizon:
            raise InstanceError(f"prefix of length {len(prefix)} exceeds horizon {self.horizon}")
        return self._schedule_check(prefix)

    def is_complete_feasible(self, full: Sequence[int]) -> bool:
        if len(full) != self.horizon:
            raise InstanceError(f"trajectory length {len(full)} != horizon {self.horizon}")
        return self._schedule_check(full)

    def oracle(self, semantics: str | None = None):
        semantics = semantics or self.semantics
        if semantics == "policy":
            return PolicyOracle(self)
        if semantics == "schedule":
            return ScheduleOracle(self)
        raise InstanceError(f"unknown feasibility semantics {semantics!r}")


class PolicyOracle(OracleBase):
    """Feasible set realized by LLF disaggregation (state = remaining demand)."""

    def __init__(self, agg: EVAggregator):
        self.agg = agg
        self.horizon = agg.horizon
        self.n_levels = agg.n_levels

    def root(self):
        return self.agg.initial_state()

    def advance(self, state, t, action):
        agg = self.agg
        if not agg.allowed[action]:
            return None
        remaining, _, left = agg.allocate(state, agg.level_energy[action])
        if left:
            return None
        slot = t + 1
        for j, d in enumerate(agg.departure):
            if d == slot and remaining[j]:
                return None
        return EVState(slot, remaining)

    def viable(self, state, t):
        return self.agg.viable_from(state)

    def complete(self, state):
        return state.t == self.horizon and not any(state.remaining)

    def key(self, state, t):
        # ids break LLF ties, so sessions are not interchangeable: key on the full vector
        return state


class ScheduleOracle(OracleBase):
    """Feasible set defined by existence of a per-session schedule (state = prefix)."""

    def __init__(self, agg: EVAggregator):
        self.agg = agg
        self.horizon = agg.horizon
        self.n_levels = agg.n_levels

    def root(self):
        return ()

    def advance(self, state, t, action):
        if not self.agg.allowed[action]:
            return None
        return state + (action,)

    def viable(self, state, t):
        return self.agg._schedule_check(state)

    def complete(self, state):
        return len(state) == self.horizon and self.agg._schedule_check(state)

    def key(self, state, t):
        return state


# -- ingestion -------------------------------------------------------------


@dataclass
class IngestReport:
    rows: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)
    clipped: list[tuple[str, float, float]] = field(default_factory=list)
    infeasible: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "errors": [{"line": ln, "reason": r} for ln, r in self.errors],
            "clipped": [{"session_id": s, "energy_kwh": a, "clipped_kwh": b} for s, a, b in self.clipped],
            "infeasible": list(self.infeasible),
        }


def _slot_index(raw: str) -> int:
    x = float(raw)
    if not x.is_integer():
        raise ValueError(f"slot index {raw!r} is not an integer")
    return int(x)


def quantize_window(
    arrival: datetime, departure: datetime, start: datetime, slot_hours: float
) -> tuple[int, int]:
    """Map timestamps to slots: arrival rounds up, departure rounds down.

    Slot ``k`` (1-based) spans ``[start + (k-1)Δ, start + kΔ)``.
    """
    da = (arrival - start).total_seconds() / 3600.0 / slot_hours
    dd = (departure - start).total_seconds() / 3600.0 / slot_hours
    eps = 1e-9
    a = math.ceil(da - eps) + 1
    d = math.floor(dd + eps)
    return a, d


def load_sessions_csv(
    path,
    time: TimeGrid,
    time_format: str = "slot",
    start: datetime | str | None = None,
    clip: bool = True,
    strict: bool = False,
) -> tuple[list[ChargingSession], IngestReport]:
    """Read ``session_id,arrival,departure,energy_kwh,peak_rate_kw`` rows.

    Malformed rows are skipped and reported. Demands exceeding the window
    capacity are clipped (and flagged) unless ``strict``, which raises.
    """
    report = IngestReport()
    sessions: list[ChargingSession] = []
    if isinstance(start, str):
        start = datetime.fromisoformat(start)
    if time_format == "iso" and start is None:
        raise InstanceError("ISO-8601 session times need a start timestamp")
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        return sessions, report
    reader = csv.DictReader(text.splitlines())
    required = ["session_id", "arrival", "departure", "energy_kwh", "peak_rate_kw"]
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    if missing:
        raise InstanceError(f"sessions CSV missing columns {missing}")
    seen = set()
    for line, row in enumerate(reader, start=2):
        report.rows += 1
        try:
            sid = (row["session_id"] or "").strip()
            if not sid:
                raise ValueError("empty session_id")
            if sid in seen:
                raise ValueError(f"duplicate session_id {sid!r}")
            if time_format == "iso":
                a, d = quantize_window(
                    datetime.fromisoformat(row["arrival"].strip()),
                    datetime.fromisoformat(row["departure"].strip()),
                    start,
                    time.slot_hours,
                )
            else:
                a, d = _slot_index(row["arrival"]), _slot_index(row["departure"])
            energy = float(row["energy_kwh"])
            rate = float(row["peak_rate_kw"])
        except (ValueError, TypeError, AttributeError) as exc:
            report.errors.append((line, str(exc)))
            continue
        a = max(a, 1)
        d = min(d, time.horizon)
        if d < a:
            report.errors.append((line, "departure before arrival"))
            continue
        if not (energy > 0 and math.isfinite(energy)):
            report.errors.append((line, "energy must be positive"))
            continue
        if not (rate > 0 and math.isfinite(rate)):
            report.errors.append((line, "peak rate must be positive"))
            continue
        capacity = (d - a + 1) * to_milli(rate * time.slot_hours)
        if to_milli(energy) > capacity:
            report.infeasible.append(sid)
            if strict:
                raise InstanceError(
                    f"session {sid!r} demands {energy} kWh but its window holds {capacity / MILLI} kWh"
                )
            if clip:
                log.warning("clipping session %s from %s to %s kWh", sid, energy, capacity / MILLI)
                report.clipped.append((sid, energy, capacity / MILLI))
                energy = capacity / MILLI
        seen.add(sid)
        sessions.append(ChargingSession(sid, a, d, energy, rate))
    return sessions, report
