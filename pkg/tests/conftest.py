import os

import pytest
from hypothesis import HealthCheck, settings

from flexagg.core import ActionGrid, CostSchedule, Scenario, TimeGrid
from flexagg.ev import ChargingSession, EVAggregator
from flexagg.synth import example1, small_corpus

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=400, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def ex1():
    return example1()


@pytest.fixture
def ex1_prices():
    return example1((3.0, 1.0, 2.0))


@pytest.fixture(scope="session")
def corpus():
    return small_corpus(24)


def ev_scenario(sessions, horizon, levels, prices=None, slot_hours=1.0, cap_kwh=None, semantics="policy"):
    time = TimeGrid(horizon, slot_hours)
    grid = ActionGrid(tuple(float(x) for x in levels), cap_kwh)
    sess = [ChargingSession(*s) if isinstance(s, tuple) else s for s in sessions]
    agg = EVAggregator(sess, time, grid, semantics)
    prices = prices if prices is not None else (1.0,) * horizon
    return Scenario(time, grid, CostSchedule("linear", tuple(prices)), agg)


@pytest.fixture
def make_ev():
    return ev_scenario
