import importlib

import networkx as nx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flexagg import _kernels
from flexagg._kernels import _flow_py

compiled = pytest.importorskip("flexagg._kernels._flowcore", reason="extension not built")


def test_backend_selected():
    assert _kernels.BACKEND == "compiled"


def test_pure_backend_forced(monkeypatch):
    monkeypatch.setenv("FLEXAGG_PURE", "1")
    mod = importlib.reload(_kernels)
    try:
        assert mod.BACKEND == "python"
    finally:
        monkeypatch.delenv("FLEXAGG_PURE")
        importlib.reload(_kernels)


graphs = st.integers(3, 7).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1), st.integers(0, 9)), max_size=20),
    )
)


@given(graphs)
def test_max_flow_matches_networkx(g):
    n, edges = g
    edges = [(u, v, c) for u, v, c in edges if u != v]
    tails, heads, caps = [e[0] for e in edges], [e[1] for e in edges], [e[2] for e in edges]
    G = nx.DiGraph()
    G.add_nodes_from(range(n))
    for u, v, c in edges:
        if G.has_edge(u, v):
            G[u][v]["capacity"] += c
        else:
            G.add_edge(u, v, capacity=c)
    want = nx.maximum_flow_value(G, 0, n - 1)
    assert _flow_py.max_flow(n, tails, heads, caps, 0, n - 1) == want
    assert compiled.max_flow(n, tails, heads, caps, 0, n - 1) == want


instances = st.integers(1, 4).flatmap(
    lambda k: st.tuples(
        st.lists(st.integers(0, 6), min_size=k, max_size=k),
        st.lists(st.integers(1, 3), min_size=k, max_size=k),
        st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=k, max_size=k),
        st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=5, max_size=5),
    )
)


@given(instances)
def test_schedule_feasible_backends_agree(inst):
    energy, rate, windows, bounds = inst
    start = [min(w) for w in windows]
    end = [max(w) for w in windows]
    lo = [min(b) for b in bounds]
    hi = [max(b) for b in bounds]
    a = _flow_py.schedule_feasible(energy, rate, start, end, lo, hi)
    b = compiled.schedule_feasible(energy, rate, start, end, lo, hi)
    assert bool(a) == bool(b)


def test_schedule_feasible_lower_bounds():
    # one session, 2 units over slots 0..1 at rate 1; slot 0 pinned to 0
    assert not _flow_py.schedule_feasible([2], [1], [0], [1], [0, 0], [0, 2])
    assert _flow_py.schedule_feasible([2], [1], [0], [1], [1, 1], [1, 1])
    # a slot forced to carry energy nobody can supply
    assert not compiled.schedule_feasible([1], [1], [0], [0], [0, 1], [1, 1])
