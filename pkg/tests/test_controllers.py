import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexagg.controllers import (
    MPC,
    PPC,
    DeadEndError,
    InfeasibleInstance,
    MpcConfig,
    PpcConfig,
    beta_sweep,
    log_beta_grid,
    mpc_step,
    offline_optimal_bruteforce,
    offline_optimal_flow,
    ppc_step,
)
from flexagg.core import evaluate_cost
from flexagg.harness import run_closed_loop
from flexagg.mef import BudgetExceeded, ContinuationCounter, ExactProvider, FlexibilityFeedback
from flexagg.synth import fleet_scenario

import reference as ref


def fb(*p):
    return FlexibilityFeedback(tuple(float(x) for x in p))


# -- PPC step ---------------------------------------------------------------------


def test_constant_cost_picks_most_flexible():
    for beta in (1e-3, 1.0, 1e3):
        assert ppc_step(fb(2 / 3, 1 / 3), [1.0, 1.0], PpcConfig(beta), 0) == 0


def test_single_positive_action_is_forced():
    for beta in (1e-3, 1.0, 1e3):
        assert ppc_step(fb(0, 1), [0.0, 100.0], PpcConfig(beta), 0) == 1


def test_small_beta_picks_cheapest():
    assert ppc_step(fb(0.9, 0.05, 0.05), [3.0, 1.0, 2.0], PpcConfig(1e-9), 0) == 1


def test_exact_ties_go_to_lowest_level():
    assert ppc_step(fb(0.5, 0.5), [1.0, 1.0], PpcConfig(1.0), 0) == 0


def test_alternate_tie_break():
    # equal objectives: 0 - log(1/2) == log 2 - log 1
    f, costs = fb(0.5, 1.0), [0.0, math.log(2.0)]
    assert -math.log(0.5) == math.log(2.0)
    assert ppc_step(f, costs, PpcConfig(1.0), 0) == 0
    assert ppc_step(f, costs, PpcConfig(1.0, tie_break="highest-prob-then-lowest-level"), 0) == 1


def test_dead_end_feedback_raises():
    with pytest.raises(DeadEndError):
        ppc_step(fb(0, 0), [1.0, 1.0], PpcConfig(1.0), 0)


@pytest.mark.parametrize("beta", [0.0, -1.0, float("inf"), (1.0, 0.0)])
def test_beta_must_be_positive(beta):
    with pytest.raises(ValueError):
        PpcConfig(beta)


def test_beta_schedule_indexing():
    cfg = PpcConfig((1.0, 2.0, 3.0))
    assert [cfg.beta_at(t) for t in range(3)] == [1.0, 2.0, 3.0]


# -- MPC ----------------------------------------------------------------------------


def test_mpc_defers_to_cheapest_slot(ex1_prices):
    agg = ex1_prices.aggregator
    d = mpc_step(agg, agg.initial_state(), ex1_prices.costs.values, MpcConfig(gamma=1.0), 0)
    assert d.level == 0 and d.feasible
    assert d.schedule == {"ev1": [0.0, 1.0, 0.0]}
    rep = run_closed_loop(ex1_prices, None, MPC())
    assert rep.trajectory == (0, 1, 0) and rep.total_cost == 1.0 and rep.mpe == 0.0


def test_mpc_gamma_zero_does_nothing(ex1_prices):
    rep = run_closed_loop(ex1_prices, None, MPC(MpcConfig(gamma=0.0)))
    assert rep.trajectory == (0, 0, 0) and rep.total_cost == 0 and rep.mpe == 1.0


def test_mpc_disjoint_sessions_separate(make_ev):
    prices = (3.0, 1.0, 2.0, 5.0, 4.0, 1.5)
    both = make_ev([("a", 1, 3, 2.0, 1.0), ("b", 4, 6, 1.0, 1.0)], 6, (0, 1, 2), prices)
    only_a = make_ev([("a", 1, 3, 2.0, 1.0)], 6, (0, 1, 2), prices)
    only_b = make_ev([("b", 4, 6, 1.0, 1.0)], 6, (0, 1, 2), prices)
    total = offline_optimal_flow(both).cost
    assert total == offline_optimal_flow(only_a).cost + offline_optimal_flow(only_b).cost
    rep = run_closed_loop(both, None, MPC())
    assert Fraction(rep.total_cost).limit_denominator(1000) == total


def test_mpc_infeasible_commits_lowest(make_ev):
    sc = make_ev([("a", 1, 2, 3.0, 1.0)], 2, (0, 1))
    agg = sc.aggregator
    d = mpc_step(agg, agg.initial_state(), sc.costs.values, MpcConfig(), 0)
    assert not d.feasible and d.level == 0 and d.shortfall_kwh == 1.0
    d2 = mpc_step(agg, agg.initial_state(), sc.costs.values, MpcConfig(on_infeasible="best-effort"), 0)
    assert d2.level == 1


def test_mpc_rounds_down_to_grid(make_ev):
    sc = make_ev([("a", 1, 1, 1.5, 2.0)], 1, (0, 1, 2), (1.0,))
    agg = sc.aggregator
    d = mpc_step(agg, agg.initial_state(), sc.costs.values, MpcConfig(), 0)
    assert d.planned_kwh == 1.5 and d.level == 1


def test_mpc_fixed_window_only_takes_what_cannot_wait(make_ev):
    sc = make_ev([("a", 1, 4, 2.0, 1.0)], 4, (0, 1), (1.0, 1.0, 5.0, 5.0))
    agg = sc.aggregator
    d = mpc_step(agg, agg.initial_state(), sc.costs.values, MpcConfig(horizon_rule="fixed-window", window=2), 0)
    assert d.schedule["a"] == [0.0, 0.0]


def test_mpc_matches_flow_first_slot(corpus):
    """With every session present from slot 1, MPC's first plan is the offline flow plan."""
    checked = 0
    for sc in corpus:
        agg = sc.aggregator
        if any(a != 1 for a in agg.arrival):
            continue
        d = mpc_step(agg, agg.initial_state(), sc.costs.values, MpcConfig(), 0)
        assert d.planned_kwh == offline_optimal_flow(sc).slot_energy_kwh[0]
        checked += 1
    assert checked >= 3


@pytest.mark.parametrize("gamma", [-0.1, 1.5])
def test_gamma_range(gamma):
    with pytest.raises(ValueError):
        MpcConfig(gamma=gamma)


# -- offline optima -------------------------------------------------------------------


def test_bruteforce_example1_prices(ex1_prices):
    sol = offline_optimal_bruteforce(ex1_prices)
    assert sol.trajectory == (0, 1, 0) and sol.cost == 1


def test_bruteforce_constant_prices_lexicographic(ex1):
    sol = offline_optimal_bruteforce(ex1)
    assert sol.trajectory == (0, 0, 1)


def test_bruteforce_empty_set(make_ev):
    with pytest.raises(InfeasibleInstance):
        offline_optimal_bruteforce(make_ev([("a", 1, 1, 5.0, 1.0)], 2, (0, 1)))


def test_bruteforce_budget():
    with pytest.raises(BudgetExceeded):
        offline_optimal_bruteforce(fleet_scenario(0), node_budget=50)


def test_bruteforce_matches_enumeration(corpus):
    for sc in corpus:
        for semantics in ("policy", "schedule"):
            if semantics == "schedule" and ref.n_candidates(sc.aggregator) > 100_000:
                continue
            feas = sorted(ref.feasible_set(sc, semantics))
            costs = {u: evaluate_cost(sc, u, exact=True) for u in feas}
            best = min(costs.values())
            want = min(u for u in feas if costs[u] == best)
            sol = offline_optimal_bruteforce(sc, sc.oracle(semantics))
            assert (sol.trajectory, sol.cost) == (want, best)


def test_flow_single_ev(ex1_prices):
    sol = offline_optimal_flow(ex1_prices)
    assert sol.cost == 1 and sol.trajectory == (0, 1, 0)


def test_flow_zero_demand(make_ev):
    sol = offline_optimal_flow(make_ev([], 3, (0, 1), (1.0, 2.0, 3.0)))
    assert sol.cost == 0 and sol.trajectory == (0, 0, 0)


def test_flow_lower_bounds_grid_optimum(corpus):
    for sc in corpus:
        flow = offline_optimal_flow(sc)
        assert flow.cost <= offline_optimal_bruteforce(sc).cost
        if flow.trajectory is not None and ref.n_candidates(sc.aggregator) <= 100_000:
            assert flow.cost == offline_optimal_bruteforce(sc, sc.oracle("schedule")).cost


def test_flow_scaled_demand(ex1_prices):
    assert offline_optimal_flow(ex1_prices, demand_scale=0.5).cost == Fraction(1, 2)
    assert offline_optimal_flow(ex1_prices, demand_scale=0.0).cost == 0


# -- closed-loop guarantees ------------------------------------------------------------


@settings(max_examples=25)
@given(st.data())
def test_ppc_feasible_for_any_positive_schedule(corpus, data):
    sc = data.draw(st.sampled_from(corpus))
    betas = tuple(data.draw(st.lists(st.floats(1e-4, 1e4), min_size=sc.horizon, max_size=sc.horizon)))
    rep = run_closed_loop(sc, ExactProvider(sc.oracle()), PPC(PpcConfig(betas)))
    assert rep.feasible and rep.mpe == 0.0
    assert sc.oracle().is_complete_feasible(rep.trajectory)


@pytest.mark.parametrize("beta", [0.1, 1.0, 10.0])
def test_penalized_minimizers_equal_constrained(corpus, beta):
    for sc in corpus:
        counter = ContinuationCounter(sc.oracle())
        size = counter.count(())
        feas = ref.feasible_set(sc, "policy")
        best_c = min(evaluate_cost(sc, u, exact=True) for u in feas)
        constrained = {u for u in feas if evaluate_cost(sc, u, exact=True) == best_c}
        values = {}
        for u in ref.all_trajectories(len(sc.grid), sc.horizon):
            prod = Fraction(1)
            for t in range(sc.horizon):
                prod *= counter.feedback(u[:t]).exact[u[t]]
                if prod == 0:
                    break
            if prod == 0:
                assert u not in feas
                continue
            assert prod == Fraction(1, size)
            values[u] = float(evaluate_cost(sc, u, exact=True)) - beta * math.fsum(
                math.log(counter.feedback(u[:t]).exact[u[t]]) for t in range(sc.horizon)
            )
        lo = min(values.values())
        penalized = {u for u, v in values.items() if v <= lo + 1e-9}
        assert penalized == constrained
        for u, v in values.items():
            assert v - float(evaluate_cost(sc, u, exact=True)) == pytest.approx(beta * math.log(size), abs=1e-9)


# -- beta sweep ------------------------------------------------------------------------------


def test_sweep_example1_prices(ex1_prices):
    rows = beta_sweep(ex1_prices, [1e-3, 1.0, 1e3])
    assert len(rows) == 3
    assert all(r.feasible and r.mpe == 0 for r in rows)
    assert {r.trajectory for r in rows} == {(0, 0, 1)}


def test_sweep_constant_prices(ex1):
    rows = beta_sweep(ex1, log_beta_grid())
    assert len(rows) == 24 and all(r.feasible and r.mpe == 0 for r in rows)


def test_sweep_empty():
    assert beta_sweep(None, []) == []


def test_log_grid_endpoints():
    g = log_beta_grid()
    assert len(g) == 24 and g[0] == pytest.approx(1e-3) and g[-1] == pytest.approx(1e6)
