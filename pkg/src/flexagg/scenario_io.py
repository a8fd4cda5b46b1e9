"""Scenario JSON documents.

Layout::

    {
      "schema": 1,
      "name": "example1",
      "horizon_T": 3,
      "slot_duration_hours": 1.0,
      "action_levels_kw": [0, 1],
      "operational_cap_kwh": null,
      "costs": {"kind": "linear", "values": [3, 1, 2]},
      "aggregator": {
        "kind": "ev",
        "feasibility": "policy",
        "sessions": [{"session_id": "s1", "arrival": 1, "departure": 3,
                      "energy_kwh": 1.0, "peak_rate_kw": 1.0}],
        "sessions_csv": null, "time_format": "slot", "start": null,
        "clip": true, "strict": false
      }
    }

``aggregator.kind`` may also be ``"unconstrained"`` (every grid trajectory is
feasible). A relative ``sessions_csv`` path resolves against the JSON file.
"""
from __future__ import annotations

import json
from pathlib import Path

from .core import ActionGrid, CostSchedule, InstanceError, Scenario, TimeGrid, Violation
from .ev import ChargingSession, EVAggregator, IngestReport, load_sessions_csv


class ScenarioError(InstanceError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


def scenario_from_dict(doc: dict, base_dir: Path | None = None, sessions_csv=None) -> tuple[Scenario, IngestReport | None]:
    problems: list[Violation] = []
    for key in ("horizon_T", "slot_duration_hours", "action_levels_kw", "costs"):
        if key not in doc:
            problems.append(Violation(key, "missing field", None))
    if problems:
        raise ScenarioError(problems)
    try:
        time = TimeGrid(int(doc["horizon_T"]), float(doc["slot_duration_hours"]))
    except (InstanceError, TypeError, ValueError) as exc:
        raise ScenarioError([Violation("time", "invalid time grid", str(exc))]) from None
    cap = doc.get("operational_cap_kwh")
    grid = ActionGrid(tuple(doc["action_levels_kw"]), None if cap is None else float(cap))
    cdoc = doc["costs"]
    try:
        costs = CostSchedule(cdoc.get("kind", "linear"), tuple(cdoc["values"]))
    except (InstanceError, KeyError, TypeError, ValueError) as exc:
        raise ScenarioError([Violation("costs", "invalid cost schedule", str(exc))]) from None

    adoc = doc.get("aggregator") or {"kind": "unconstrained"}
    kind = adoc.get("kind", "ev")
    report = None
    if kind == "unconstrained":
        aggregator = None
    elif kind == "ev":
        csv_path = sessions_csv or adoc.get("sessions_csv")
        if csv_path is not None:
            p = Path(csv_path)
            if not p.is_absolute() and base_dir is not None and sessions_csv is None:
                p = base_dir / p
            sessions, report = load_sessions_csv(
                p,
                time,
                time_format=adoc.get("time_format", "slot"),
                start=adoc.get("start"),
                clip=adoc.get("clip", True),
                strict=adoc.get("strict", False),
            )
        else:
            sessions = [
                ChargingSession(
                    str(s["session_id"]),
                    int(s["arrival"]),
                    int(s["departure"]),
                    float(s["energy_kwh"]),
                    float(s["peak_rate_kw"]),
                )
                for s in adoc.get("sessions", [])
            ]
        aggregator = EVAggregator(sessions, time, grid, adoc.get("feasibility", "policy"))
    else:
        raise ScenarioError([Violation("aggregator.kind", "unknown aggregator kind", kind)])
    scenario = Scenario(time, grid, costs, aggregator, name=str(doc.get("name", "scenario")))
    return scenario, report


def load_scenario(path, sessions_csv=None) -> tuple[Scenario, IngestReport | None]:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    doc.setdefault("name", path.stem)
    return scenario_from_dict(doc, path.parent, sessions_csv)


def scenario_to_dict(scenario: Scenario) -> dict:
    doc = {
        "schema": 1,
        "name": scenario.name,
        "horizon_T": scenario.horizon,
        "slot_duration_hours": scenario.time.slot_hours,
        "action_levels_kw": list(scenario.grid.levels),
        "operational_cap_kwh": scenario.grid.cap_kwh,
        "costs": {"kind": scenario.costs.kind, "values": [list(v) if isinstance(v, tuple) else v for v in scenario.costs.values]},
    }
    agg = scenario.aggregator
    if agg is None:
        doc["aggregator"] = {"kind": "unconstrained"}
    else:
        doc["aggregator"] = {
            "kind": "ev",
            "feasibility": agg.semantics,
            "sessions": [
                {
                    "session_id": s.session_id,
                    "arrival": s.arrival,
                    "departure": s.departure,
                    "energy_kwh": s.energy_kwh,
                    "peak_rate_kw": s.rate_kw,
                }
                for s in agg.sessions
            ],
        }
    return doc


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n", encoding="utf-8")
