"""``flexctl``: run, inspect and compare controllers on scenario files.

Exit codes: 0 success, 1 I/O or validation error, 2 infeasible or dead end,
3 enumeration budget exceeded.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

from . import __version__
from .controllers import (
    MPC,
    PPC,
    DeadEndError,
    InfeasibleInstance,
    MpcConfig,
    PpcConfig,
    Replay,
    beta_sweep,
    log_beta_grid,
    offline_optimal_bruteforce,
    offline_optimal_flow,
)
from .core import InstanceError, Scenario, validate_scenario
from .harness import RunSpec, compute_mpe, records_csv, report_json, run_batch, run_closed_loop, table_csv
from .mef import DEFAULT_NODE_BUDGET, BudgetExceeded, ContinuationCounter, ExactProvider, SampledProvider
from .scenario_io import ScenarioError, load_scenario, save_scenario
from .synth import fleet_scenario

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_BUDGET = 0, 1, 2, 3
CONTROLLERS = ("ppc", "mpc", "offline-brute", "offline-flow")


class UsageError(Exception):
    pass


def _floats(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise UsageError("empty number list")
    return vals


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"expected comma-separated level indices, got {text!r}") from None


def _meta() -> dict:
    return {"tool_version": __version__, "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds")}


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


@dataclass
class ExperimentSpec:
    scenarios: list[Path]
    sessions: Path | None
    out: Path
    controller: str = "ppc"
    provider: str = "exact"
    samples: int = 32
    beta: tuple[float, ...] = (1.0,)
    gamma: float = 1.0
    seed: int = 0
    jobs: int = 1
    node_budget: int | None = DEFAULT_NODE_BUDGET
    literal_mpe: bool = False
    permissive_deadend: bool = False
    extra: dict = field(default_factory=dict)

    def check(self) -> None:
        for p in self.scenarios:
            if not p.is_file():
                raise UsageError(f"scenario file not found: {p}")
        if self.sessions is not None and not self.sessions.is_file():
            raise UsageError(f"sessions file not found: {self.sessions}")
        if self.controller not in CONTROLLERS:
            raise UsageError(f"unknown controller {self.controller!r}")
        if self.provider not in ("exact", "sampled"):
            raise UsageError(f"unknown provider {self.provider!r}")
        if self.samples < 1:
            raise UsageError("--samples must be >= 1")
        if self.jobs < 1:
            raise UsageError("--jobs must be >= 1")


def _spec(args) -> ExperimentSpec:
    scen = args.scenario or []
    budget = None if args.node_budget is not None and args.node_budget <= 0 else args.node_budget
    spec = ExperimentSpec(
        scenarios=[Path(p) for p in scen],
        sessions=Path(args.sessions) if args.sessions else None,
        out=Path(args.out),
        controller=getattr(args, "controller", "ppc"),
        provider=getattr(args, "provider", "exact"),
        samples=getattr(args, "samples", 32),
        beta=_floats(args.beta) if getattr(args, "beta", None) else (1.0,),
        gamma=getattr(args, "gamma", 1.0),
        seed=args.seed,
        jobs=args.jobs,
        node_budget=budget if args.node_budget is not None else DEFAULT_NODE_BUDGET,
        literal_mpe=args.literal_mpe,
        permissive_deadend=args.permissive_deadend,
    )
    spec.check()
    return spec


def _load(spec: ExperimentSpec, path: Path) -> Scenario:
    scenario, ingest = load_scenario(path, spec.sessions)
    problems = validate_scenario(scenario)
    if problems:
        raise ScenarioError(problems)
    if ingest is not None:
        spec.extra.setdefault("ingest", {})[scenario.name] = ingest.to_dict()
        if ingest.errors and not ingest.rows:
            raise UsageError(f"no usable session rows in {spec.sessions or path}")
    return scenario


def _one_scenario(spec: ExperimentSpec) -> Scenario:
    if len(spec.scenarios) != 1:
        raise UsageError("this command takes exactly one --scenario")
    return _load(spec, spec.scenarios[0])


def _provider(spec: ExperimentSpec, scenario: Scenario):
    oracle = scenario.oracle()
    if spec.provider == "exact":
        return ExactProvider(oracle, spec.node_budget)
    return SampledProvider(oracle, spec.samples, spec.seed)


def _ppc_config(spec: ExperimentSpec, horizon: int) -> PpcConfig:
    beta = spec.beta
    if len(beta) not in (1, horizon):
        raise UsageError(f"--beta takes one value or a schedule of length {horizon}")
    return PpcConfig(beta=beta[0] if len(beta) == 1 else beta)


# -- subcommands ---------------------------------------------------------------


def cmd_run(spec: ExperimentSpec) -> int:
    scenario = _one_scenario(spec)
    provider = None
    if spec.controller == "ppc":
        provider = _provider(spec, scenario)
        controller = PPC(_ppc_config(spec, scenario.horizon))
    elif spec.controller == "mpc":
        controller = MPC(MpcConfig(gamma=spec.gamma))
    elif spec.controller == "offline-brute":
        sol = offline_optimal_bruteforce(scenario, node_budget=spec.node_budget)
        controller = Replay(sol.trajectory, "offline-brute")
    else:
        sol = offline_optimal_flow(scenario)
        if sol.trajectory is None:
            raise UsageError("offline-flow optimum is not on the action grid; use offline-brute")
        controller = Replay(sol.trajectory, "offline-flow")
    report = run_closed_loop(
        scenario, provider, controller, seed=spec.seed, permissive_deadend=spec.permissive_deadend
    )
    meta = _meta()
    meta["mpe_formula"] = "literal" if spec.literal_mpe else "per-demand"
    if spec.literal_mpe and report.demand_kwh > 0:
        report.mpe = compute_mpe([report], literal=True)
    if spec.extra.get("ingest"):
        meta["ingest"] = spec.extra["ingest"]
    _write(spec.out / "report.json", report_json(report, meta))
    _write(spec.out / "steps.csv", records_csv(report))
    status = "feasible" if report.feasible else "infeasible"
    print(f"{scenario.name}: {report.controller} cost={report.total_cost!r} mpe={report.mpe!r} mse={report.mse!r} {status}")
    if report.aborted:
        print(f"aborted: {report.aborted}", file=sys.stderr)
    for ev in report.events:
        print(ev, file=sys.stderr)
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def cmd_mef(spec: ExperimentSpec, prefix: tuple[int, ...]) -> int:
    scenario = _one_scenario(spec)
    oracle = scenario.oracle()
    if any(not 0 <= a < oracle.n_levels for a in prefix) or len(prefix) >= oracle.horizon:
        raise UsageError(f"prefix {list(prefix)} is not a proper prefix over {oracle.n_levels} levels")
    doc: dict = {"schema": 1, "prefix": list(prefix)}
    if spec.provider == "exact":
        counter = ContinuationCounter(oracle, spec.node_budget)
        fb = counter.feedback(prefix)
        total = counter.count(())
        doc["counts"] = [str(c) for c in fb.counts]
        doc["probs"] = list(fb.probs)
        doc["exact_probs"] = [str(p) for p in fb.exact] if fb.exact is not None else None
        doc["capacity_nats"] = math.log(total) if total > 0 else None
        doc["trajectory_count"] = str(total)
    else:
        fb = SampledProvider(oracle, spec.samples, spec.seed)(prefix)
        doc["estimates"] = list(fb.counts)
        doc["probs"] = list(fb.probs)
        doc["sample_count"] = spec.samples
        doc["seed"] = spec.seed
    doc["provenance"] = fb.provenance
    doc["dead_end"] = fb.dead_end
    text = _dump(doc)
    sys.stdout.write(text)
    if spec.out is not None and spec.extra.get("write"):
        _write(spec.out / "mef.json", text)
    if fb.dead_end:
        print(f"dead end: prefix {list(prefix)} has no feasible continuation", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


SWEEP_COLUMNS = ["label", "beta", "cost", "mpe", "mse", "feasible", "within_5pct", "non_monotone", "trajectory", "error"]


def _within(cost: float, ref: Fraction | None, feasible: bool) -> bool | str:
    if ref is None:
        return ""
    return bool(feasible and Fraction(cost) <= ref * Fraction(105, 100) + Fraction(1, 10**9))


def cmd_sweep(spec: ExperimentSpec, betas: list[float]) -> int:
    scenario = _one_scenario(spec)
    if spec.provider == "exact":
        provider = ExactProvider(scenario.oracle(), spec.node_budget)
    else:
        provider = SampledProvider(scenario.oracle(), spec.samples, spec.seed)
    ref_row: dict = {"label": "offline-brute", "beta": ""}
    ref = None
    try:
        sol = offline_optimal_bruteforce(scenario, node_budget=spec.node_budget)
        ref = sol.cost
        ref_row.update(cost=float(sol.cost), mpe=0.0, mse=0.0, feasible=True, trajectory=" ".join(map(str, sol.trajectory)))
    except InfeasibleInstance as exc:
        ref_row.update(feasible=False, error=str(exc))
    rows = beta_sweep(scenario, betas, provider=provider)
    out = []
    for r in rows:
        out.append(
            {
                "label": f"ppc[{spec.provider}]",
                "beta": r.beta,
                "cost": r.cost,
                "mpe": r.mpe,
                "mse": r.mse,
                "feasible": r.feasible,
                "within_5pct": _within(r.cost, ref, r.feasible),
                "non_monotone": r.non_monotone,
                "trajectory": " ".join(map(str, r.trajectory)),
                "error": r.error or "",
            }
        )
    out.append(ref_row)
    text = table_csv(out, SWEEP_COLUMNS)
    _write(spec.out / "sweep.csv", text)
    _write(spec.out / "sweep_meta.json", _dump({"schema": 1, "scenario": scenario.name, "meta": _meta()}))
    sys.stdout.write(text)
    return EXIT_OK


COMPARE_COLUMNS = ["episode_id", "curve", "param", "cost", "mpe", "mse", "feasible", "error"]


def _offline_curve(scenario: Scenario, scales) -> list[dict]:
    rows = []
    agg = scenario.aggregator
    total = sum(agg.energy)
    for s in scales:
        row = {"episode_id": scenario.name, "curve": "offline", "param": s}
        try:
            sol = offline_optimal_flow(scenario, demand_scale=s)
            met = sum(math.floor(s * e) for e in agg.energy)
            row.update(cost=float(sol.cost), mpe=1.0 - met / total, mse="", feasible=True)
        except InfeasibleInstance as exc:
            row.update(feasible=False, error=str(exc))
        rows.append(row)
    return rows


def _dominance(rows: list[dict], name: str) -> dict:
    ppc = [r for r in rows if r["episode_id"] == name and r["curve"].startswith("ppc") and "cost" in r]
    mpc = [r for r in rows if r["episode_id"] == name and r["curve"] == "mpc" and "cost" in r]
    full = [r["cost"] for r in ppc if r["mpe"] <= 1e-9]
    gamma1 = [r for r in mpc if r["param"] == 1.0]
    dominated = sum(
        1 for m in mpc if any(p["mpe"] <= m["mpe"] + 1e-12 and p["cost"] <= m["cost"] + 1e-12 for p in ppc)
    )
    return {
        "episode_id": name,
        "ppc_cost_at_mpe0": min(full) if full else None,
        "mpc_cost_gamma1": gamma1[0]["cost"] if gamma1 else None,
        "mpc_mpe_gamma1": gamma1[0]["mpe"] if gamma1 else None,
        "mpc_points_dominated_by_ppc": dominated,
        "mpc_points": len(mpc),
        "ppc_outperforms_mpc_everywhere": bool(mpc) and dominated == len(mpc),
    }


def cmd_compare(spec: ExperimentSpec, betas, gammas, scales, fleet: int) -> int:
    scenarios = [_load(spec, p) for p in spec.scenarios]
    scenarios += [fleet_scenario(spec.seed + k) for k in range(fleet)]
    if not scenarios:
        raise UsageError("compare needs --scenario files or --fleet N")
    for sc in scenarios:
        if sc.costs.kind != "linear" or sc.aggregator is None:
            raise UsageError(f"{sc.name}: compare needs linear prices and an EV aggregator")
    specs = [
        RunSpec("ppc", spec.provider, beta=b, sample_count=spec.samples, node_budget=spec.node_budget) for b in betas
    ] + [RunSpec("mpc", gamma=g) for g in gammas]
    rows: list[dict] = []
    summaries = []
    for sc in scenarios:
        batch = run_batch([sc], specs, [spec.seed], jobs=spec.jobs)
        for f in batch.failures:
            print(f"{f['episode_id']} {f['controller']}: {f['error']}", file=sys.stderr)
            if f["error"].startswith("BudgetExceeded"):
                raise BudgetExceeded(f["error"])
        for rep in batch.reports:
            label = f"ppc[{rep.provider}]" if rep.controller == "ppc" else rep.controller
            rows.append(
                {
                    "episode_id": sc.name,
                    "curve": label,
                    "param": rep.beta if rep.controller == "ppc" else rep.gamma,
                    "cost": rep.total_cost,
                    "mpe": compute_mpe([rep], literal=spec.literal_mpe),
                    "mse": rep.mse,
                    "feasible": rep.feasible,
                    "error": rep.aborted or "",
                }
            )
        rows.extend(_offline_curve(sc, scales))
        summaries.append(_dominance(rows, sc.name))
    text = table_csv(rows, COMPARE_COLUMNS)
    _write(spec.out / "compare.csv", text)
    _write(spec.out / "compare_summary.json", _dump({"schema": 1, "instances": summaries, "meta": _meta()}))
    sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(spec: ExperimentSpec, check_feasible: bool) -> int:
    if len(spec.scenarios) != 1:
        raise UsageError("validate takes exactly one --scenario")
    scenario, ingest = load_scenario(spec.scenarios[0], spec.sessions)
    problems = validate_scenario(scenario)
    doc: dict = {
        "schema": 1,
        "scenario": scenario.name,
        "valid": not problems,
        "violations": [{"field": v.field, "rule": v.rule, "value": repr(v.value)} for v in problems],
    }
    if ingest is not None:
        doc["ingest"] = ingest.to_dict()
    code = EXIT_OK if not problems else EXIT_INPUT
    if check_feasible and not problems:
        n = ContinuationCounter(scenario.oracle(), spec.node_budget).count(())
        doc["trajectory_count"] = str(n)
        if n == 0:
            code = EXIT_INFEASIBLE
    sys.stdout.write(_dump(doc))
    return code


def cmd_generate(spec: ExperimentSpec, count: int, sessions: int) -> int:
    spec.out.mkdir(parents=True, exist_ok=True)
    for k in range(count):
        sc = fleet_scenario(spec.seed + k, n_sessions=sessions)
        path = spec.out / f"{sc.name}.json"
        save_scenario(sc, path)
        print(path)
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--scenario", action="append", help="scenario JSON (repeatable for compare)")
    g.add_argument("--sessions", help="sessions CSV overriding the scenario's session list")
    g.add_argument("--out", default="runs", help="output directory (default: runs)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--node-budget", type=int, default=None, help="enumeration node cap; <=0 disables")
    g.add_argument("--literal-mpe", action="store_true", help="multiply the MPE denominator by T")
    g.add_argument("--permissive-deadend", action="store_true", help="fall back to level 0 on dead-end feedback")
    feed = argparse.ArgumentParser(add_help=False)
    feed.add_argument("--provider", choices=("exact", "sampled"), default="exact")
    feed.add_argument("--samples", type=int, default=32, help="dives per action for the sampled provider")

    p = argparse.ArgumentParser(prog="flexctl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"flexctl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common, feed], help="closed-loop run of one controller")
    r.add_argument("--controller", choices=CONTROLLERS, default="ppc")
    r.add_argument("--beta", default="1", help="beta, or a comma-separated per-slot schedule")
    r.add_argument("--gamma", type=float, default=1.0)

    m = sub.add_parser("mef", parents=[common, feed], help="feedback vector after a prefix")
    m.add_argument("--prefix", default="", help="comma-separated level indices")
    m.add_argument("--write", action="store_true", help="also write mef.json under --out")

    s = sub.add_parser("sweep", parents=[common, feed], help="PPC over a beta grid with offline reference")
    s.add_argument("--betas", help="comma-separated betas (default: 24-point log grid 1e-3..1e6)")

    c = sub.add_parser("compare", parents=[common, feed], help="cost-MPE curves for PPC, MPC and offline")
    c.add_argument("--fleet", type=int, default=0, help="add N synthetic 30-session fleet days")
    c.add_argument("--betas", default="0.001,0.01,0.1,1,10")
    c.add_argument("--gammas", default="0,0.2,0.4,0.6,0.8,1")
    c.add_argument("--scales", default="0,0.2,0.4,0.6,0.8,1")

    v = sub.add_parser("validate", parents=[common], help="check a scenario and its sessions")
    v.add_argument("--check-feasible", action="store_true", help="also count feasible trajectories")

    gen = sub.add_parser("generate", parents=[common], help="write synthetic fleet scenarios")
    gen.add_argument("--count", type=int, default=1)
    gen.add_argument("--n-sessions", type=int, default=30)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        spec = _spec(args)
        if args.command == "run":
            return cmd_run(spec)
        if args.command == "mef":
            spec.extra["write"] = args.write
            return cmd_mef(spec, _ints(args.prefix))
        if args.command == "sweep":
            betas = list(_floats(args.betas)) if args.betas else log_beta_grid()
            return cmd_sweep(spec, betas)
        if args.command == "compare":
            return cmd_compare(spec, _floats(args.betas), _floats(args.gammas), _floats(args.scales), args.fleet)
        if args.command == "validate":
            return cmd_validate(spec, args.check_feasible)
        if args.command == "generate":
            return cmd_generate(spec, args.count, args.n_sessions)
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (InfeasibleInstance, DeadEndError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ScenarioError as exc:
        for v in exc.violations:
            print(f"invalid: {v}", file=sys.stderr)
        return EXIT_INPUT
    except (UsageError, InstanceError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
