"""Closed-loop operator/aggregator simulation, tracking metrics and batch runs."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .controllers import MPC, PPC, DeadEndError, MpcConfig, PpcConfig, Replay, offline_optimal_bruteforce
from .core import MILLI, Scenario
from .mef import DEFAULT_NODE_BUDGET, ExactProvider, FlexibilityFeedback, SampledProvider

SCHEMA = 1


@dataclass
class ControlRecord:
    t: int
    action_kw: float
    action_index: int
    feedback: tuple[float, ...] | None
    cost_increment: float
    delivered_kwh: float
    per_session_kwh: dict[str, float]
    residual_kwh: float
    info: dict = field(default_factory=dict)


@dataclass
class RunReport:
    episode_id: str
    controller: str
    provider: str | None
    horizon: int
    xi_kwh: float
    demand_kwh: float
    total_cost: float
    delivered_kwh: float
    mse: float
    mpe: float
    feasible: bool
    trajectory: tuple[int, ...]
    records: list[ControlRecord]
    beta: float | None = None
    gamma: float | None = None
    seed: int = 0
    aborted: str | None = None
    events: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trajectory"] = list(self.trajectory)
        d["schema"] = SCHEMA
        return d


def _xi(scenario: Scenario) -> float:
    if scenario.grid.cap_kwh is not None:
        return scenario.grid.cap_kwh
    return max(scenario.grid.levels) * scenario.time.slot_hours


def run_closed_loop(
    scenario: Scenario,
    feedback_provider,
    controller,
    seed: int = 0,
    episode_id: str | None = None,
    permissive_deadend: bool = False,
    trace: list | None = None,
) -> RunReport:
    """Alternate feedback, operator action and state update over the horizon.

    Feedback for slot ``t`` is computed from the state before ``u_t`` is
    applied. ``trace`` (optional list) receives ``(event, t)`` tuples for
    ordering checks.
    """
    agg = scenario.aggregator
    state = agg.initial_state() if agg is not None else None
    level_energy = scenario.grid.energy_milli(scenario.time.slot_hours)
    prefix: list[int] = []
    records: list[ControlRecord] = []
    events: list[str] = []
    aborted = None
    cost_total = 0.0
    for t in range(scenario.horizon):
        fb: FlexibilityFeedback | None = None
        if feedback_provider is not None and controller.needs_feedback:
            fb = feedback_provider(tuple(prefix))
            if trace is not None:
                trace.append(("feedback", t, state))
        try:
            a, info = controller.decide(t, fb, scenario, state, tuple(prefix))
        except DeadEndError as exc:
            if not permissive_deadend:
                aborted = str(exc)
                break
            a = 0
            info = {"dead_end_fallback": True}
            events.append(f"slot {t + 1}: dead-end feedback, fell back to level 0")
        if trace is not None:
            trace.append(("action", t, a))
        inc = scenario.cost(t, a)
        cost_total += inc
        if agg is not None:
            state, res = agg.advance(state, a)
            delivered, residual = res.delivered_kwh, res.undelivered_kwh
            per = dict(zip(res.active_ids, res.per_session_kwh))
        else:
            delivered, residual, per = level_energy[a] / MILLI, 0.0, {}
        if trace is not None:
            trace.append(("advance", t, state))
        prefix.append(a)
        records.append(
            ControlRecord(
                t + 1,
                scenario.grid.levels[a],
                a,
                fb.probs if fb is not None else None,
                inc,
                delivered,
                per,
                residual,
                info,
            )
        )
    demand = agg.total_demand_kwh() if agg is not None else 0.0
    delivered_total = math.fsum(r.delivered_kwh for r in records)
    xi = _xi(scenario)
    mse = math.fsum(r.residual_kwh**2 for r in records) / (scenario.horizon * xi)
    mpe = (demand - delivered_total) / demand if demand > 0 else 0.0
    unmet = agg is not None and state is not None and any(state.remaining)
    feasible = (
        aborted is None
        and not events
        and len(records) == scenario.horizon
        and all(r.residual_kwh == 0 for r in records)
        and not unmet
    )
    return RunReport(
        episode_id=episode_id or scenario.name,
        controller=getattr(controller, "name", type(controller).__name__),
        provider=getattr(feedback_provider, "name", None) if controller.needs_feedback else None,
        horizon=scenario.horizon,
        xi_kwh=xi,
        demand_kwh=demand,
        total_cost=cost_total,
        delivered_kwh=delivered_total,
        mse=mse,
        mpe=max(0.0, mpe),
        feasible=feasible,
        trajectory=tuple(prefix),
        records=records,
        beta=getattr(getattr(controller, "config", None), "beta", None) if isinstance(controller, PPC) else None,
        gamma=controller.config.gamma if isinstance(controller, MPC) else None,
        seed=seed,
        aborted=aborted,
        events=events,
    )


def compute_mse(reports: Sequence[RunReport], xi: float | None = None) -> float:
    """Squared tracking residual summed over episodes and slots, over ``L*T*xi``."""
    if not reports:
        raise ValueError("no reports")
    horizon = reports[0].horizon
    if any(r.horizon != horizon for r in reports):
        raise ValueError("reports cover different horizons")
    xi = reports[0].xi_kwh if xi is None else xi
    if not xi > 0:
        raise ValueError("xi must be positive")
    total = math.fsum(rec.residual_kwh**2 for r in reports for rec in r.records)
    return total / (len(reports) * horizon * xi)


def compute_mpe(reports: Sequence[RunReport], demand_kwh: float | None = None, literal: bool = False) -> float:
    """Undelivered fraction of requested energy across episodes.

    The denominator is the summed per-episode demand (``L * sum e`` for
    identical episodes). ``literal`` additionally multiplies it by ``T``.
    """
    if not reports:
        raise ValueError("no reports")
    if demand_kwh is not None:
        denom = len(reports) * demand_kwh
    else:
        denom = math.fsum(r.demand_kwh for r in reports)
    if not denom > 0:
        raise ValueError("total demand is zero")
    if literal:
        denom *= reports[0].horizon
    delivered = math.fsum(r.delivered_kwh for r in reports)
    # difference first: 1 - 9/10 is not 0.1 in floating point
    return (denom - delivered) / denom


# -- batch -------------------------------------------------------------------


@dataclass(frozen=True)
class RunSpec:
    """Picklable description of one provider/controller pairing."""

    controller: str  # ppc | mpc | offline-brute | offline-flow
    provider: str = "exact"  # exact | sampled
    beta: float = 1.0
    gamma: float = 1.0
    sample_count: int = 32
    node_budget: int | None = DEFAULT_NODE_BUDGET
    permissive_deadend: bool = False
    semantics: str | None = None

    @property
    def label(self) -> str:
        if self.controller == "ppc":
            return f"ppc[{self.provider}]"
        return self.controller


def build(spec: RunSpec, scenario: Scenario, seed: int):
    """Instantiate (provider, controller) for one run."""
    from .controllers import offline_optimal_flow

    oracle = scenario.oracle(spec.semantics)
    if spec.controller == "ppc":
        if spec.provider == "exact":
            provider = ExactProvider(oracle, spec.node_budget)
        elif spec.provider == "sampled":
            provider = SampledProvider(oracle, spec.sample_count, seed)
        else:
            raise ValueError(f"unknown provider {spec.provider!r}")
        return provider, PPC(PpcConfig(beta=spec.beta))
    if spec.controller == "mpc":
        return None, MPC(MpcConfig(gamma=spec.gamma))
    if spec.controller == "offline-brute":
        sol = offline_optimal_bruteforce(scenario, oracle, spec.node_budget)
        return None, Replay(sol.trajectory, "offline-brute")
    if spec.controller == "offline-flow":
        sol = offline_optimal_flow(scenario)
        if sol.trajectory is None:
            raise ValueError("continuous offline optimum is not on the action grid")
        return None, Replay(sol.trajectory, "offline-flow")
    raise ValueError(f"unknown controller {spec.controller!r}")


def _run_one(args):
    idx, scenario, spec, seed = args
    try:
        provider, controller = build(spec, scenario, seed)
        rep = run_closed_loop(scenario, provider, controller, seed=seed, permissive_deadend=spec.permissive_deadend)
        if spec.controller == "ppc":
            rep.beta = spec.beta
        return idx, rep, None
    except Exception as exc:  # recorded, batch continues
        return idx, None, f"{type(exc).__name__}: {exc}"


@dataclass
class BatchResult:
    reports: list[RunReport]
    failures: list[dict]
    table: list[dict]


def run_batch(
    scenarios: Sequence[Scenario], specs: Sequence[RunSpec], seeds: Sequence[int], jobs: int = 1
) -> BatchResult:
    """Cross product of scenarios x specs x seeds with a per-spec aggregate table."""
    if not specs:
        raise ValueError("empty provider/controller matrix")
    tasks = [
        (i, sc, spec, seed)
        for i, (sc, spec, seed) in enumerate((sc, sp, sd) for sc in scenarios for sp in specs for sd in seeds)
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    reports, failures = [], []
    for (idx, sc, spec, seed), (_, rep, err) in zip(tasks, results):
        if err is not None:
            failures.append({"episode_id": sc.name, "controller": spec.label, "seed": seed, "error": err})
        else:
            reports.append(rep)
    table = []
    for spec in specs:
        group = [r for (i, sc, sp, sd), (_, r, e) in zip(tasks, results) if sp == spec and r is not None]
        if not group:
            continue
        demand = math.fsum(r.demand_kwh for r in group)
        table.append(
            {
                "controller": spec.label,
                "beta": spec.beta if spec.controller == "ppc" else "",
                "gamma": spec.gamma if spec.controller == "mpc" else "",
                "cost": math.fsum(r.total_cost for r in group) / len(group),
                "mpe": compute_mpe(group) if demand > 0 else 0.0,
                # per-episode mean; equals compute_mse when T and xi agree across episodes
                "mse": math.fsum(r.mse for r in group) / len(group),
                "feasible": all(r.feasible for r in group),
                "runs": len(group),
            }
        )
    return BatchResult(reports, failures, table)


# -- writers -----------------------------------------------------------------


def records_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "u_kw", "delivered_kwh", "cost_increment", "residual_kwh"])
    for r in report.records:
        w.writerow([r.t, repr(r.action_kw), repr(r.delivered_kwh), repr(r.cost_increment), repr(r.residual_kwh)])
    return buf.getvalue()


def report_json(report: RunReport, meta: dict | None = None) -> str:
    d = report.to_dict()
    if meta:
        d["meta"] = meta
    return json.dumps(d, indent=2, sort_keys=True) + "\n"


def table_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
