"""Maximum entropy flexibility feedback over discrete action grids.

The feedback for action ``u`` after prefix ``v`` is the fraction of feasible
completions of ``v`` that start with ``u``. Counts are exact Python integers,
so probabilities are exact rationals until they cross the float interface.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

DEFAULT_NODE_BUDGET = 10_000_000


class BudgetExceeded(RuntimeError):
    """Exact enumeration visited more nodes than allowed."""


class CapacityError(ValueError):
    """The feasible trajectory set is empty, so its log-size is undefined."""


@dataclass(frozen=True)
class FlexibilityFeedback:
    probs: tuple[float, ...]
    provenance: str = "exact"
    counts: tuple = ()
    exact: tuple[Fraction, ...] | None = None
    sample_count: int | None = None

    @property
    def dead_end(self) -> bool:
        return not any(self.probs)

    def to_dict(self) -> dict:
        d = {"provenance": self.provenance, "probs": list(self.probs)}
        if self.counts:
            d["counts"] = [str(c) if isinstance(c, int) else c for c in self.counts]
        if self.sample_count is not None:
            d["sample_count"] = self.sample_count
        return d


class ContinuationCounter:
    """Memoized depth-first count of feasible completions for one oracle.

    The memo persists across calls, so repeated queries along one closed-loop
    run cost a single enumeration.
    """

    def __init__(self, oracle, node_budget: int | None = DEFAULT_NODE_BUDGET):
        self.oracle = oracle
        self.node_budget = node_budget
        self.memo: dict = {}
        self.visited = 0

    def _count(self, state, t: int) -> int:
        oracle = self.oracle
        key = oracle.key(state, t)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        self.visited += 1
        if self.node_budget is not None and self.visited > self.node_budget:
            raise BudgetExceeded(f"enumeration exceeded {self.node_budget} nodes")
        if t == oracle.horizon:
            c = 1 if oracle.complete(state) else 0
        elif not oracle.viable(state, t):
            c = 0
        else:
            c = 0
            for a in range(oracle.n_levels):
                child = oracle.advance(state, t, a)
                if child is not None:
                    c += self._count(child, t + 1)
        self.memo[key] = c
        return c

    def count(self, prefix: Sequence[int] = ()) -> int:
        state = self.oracle.replay(prefix)
        if state is None:
            return 0
        return self._count(state, len(prefix))

    def child_counts(self, prefix: Sequence[int] = ()) -> list[int]:
        oracle = self.oracle
        t = len(prefix)
        if t >= oracle.horizon:
            raise ValueError("a full trajectory has no next action")
        state = oracle.replay(prefix)
        if state is None:
            return [0] * oracle.n_levels
        out = []
        for a in range(oracle.n_levels):
            child = oracle.advance(state, t, a)
            out.append(0 if child is None else self._count(child, t + 1))
        return out

    def feedback(self, prefix: Sequence[int] = ()) -> FlexibilityFeedback:
        counts = self.child_counts(prefix)
        total = sum(counts)
        if total == 0:
            zero = tuple(Fraction(0) for _ in counts)
            return FlexibilityFeedback(tuple(0.0 for _ in counts), "exact", tuple(counts), zero)
        exact = tuple(Fraction(c, total) for c in counts)
        return FlexibilityFeedback(tuple(float(p) for p in exact), "exact", tuple(counts), exact)

    def entropy(self, prefix: Sequence[int] = ()) -> float:
        """Total conditional entropy (nats) of the MEF chain below ``prefix``."""
        state = self.oracle.replay(prefix)
        if state is None or self._count(state, len(prefix)) == 0:
            raise CapacityError("no feasible completion")
        cache: dict = {}
        return self._entropy(state, len(prefix), cache)

    def _entropy(self, state, t: int, cache: dict) -> float:
        oracle = self.oracle
        if t == oracle.horizon:
            return 0.0
        key = oracle.key(state, t)
        if key in cache:
            return cache[key]
        parent = self._count(state, t)
        log_parent = math.log(parent)
        terms = []
        for a in range(oracle.n_levels):
            child = oracle.advance(state, t, a)
            if child is None:
                continue
            n = self._count(child, t + 1)
            if n == 0:
                continue
            p = n / parent
            terms.append(p * (log_parent - math.log(n)))
            terms.append(p * self._entropy(child, t + 1, cache))
        h = math.fsum(terms)
        cache[key] = h
        return h


def count_continuations(oracle, prefix: Sequence[int] = (), node_budget=DEFAULT_NODE_BUDGET) -> int:
    """Exact number of feasible completions of ``prefix``."""
    return ContinuationCounter(oracle, node_budget).count(prefix)


def exact_mef(oracle, prefix: Sequence[int] = (), node_budget=DEFAULT_NODE_BUDGET) -> FlexibilityFeedback:
    return ContinuationCounter(oracle, node_budget).feedback(prefix)


def system_capacity(oracle, node_budget=DEFAULT_NODE_BUDGET) -> float:
    """Natural log of the number of feasible trajectories."""
    n = count_continuations(oracle, (), node_budget)
    if n == 0:
        raise CapacityError("feasible trajectory set is empty")
    return math.log(n)


def chain_entropy(oracle, node_budget=DEFAULT_NODE_BUDGET) -> float:
    """Sum over slots of the expected conditional entropy of the exact MEF."""
    return ContinuationCounter(oracle, node_budget).entropy(())


class TreeSizeSampler:
    """Knuth tree-size estimates of completion counts via random dives.

    Each dive walks from a node to the horizon choosing uniformly among
    admissible children and multiplies the branching factors seen; a dive
    ending in an infeasible leaf scores zero. The mean score is unbiased for
    the number of feasible leaves below the node.
    """

    def __init__(self, oracle):
        self.oracle = oracle
        self._children: dict = {}

    def children(self, state, t: int) -> list:
        key = self.oracle.key(state, t)
        hit = self._children.get(key)
        if hit is not None:
            return hit
        oracle = self.oracle
        kids = []
        for a in range(oracle.n_levels):
            child = oracle.advance(state, t, a)
            if child is None:
                continue
            ok = oracle.complete(child) if t + 1 == oracle.horizon else oracle.viable(child, t + 1)
            if ok:
                kids.append(child)
        self._children[key] = kids
        return kids

    def dive(self, state, t: int, rng: np.random.Generator) -> float:
        weight = 1.0
        horizon = self.oracle.horizon
        while t < horizon:
            kids = self.children(state, t)
            if not kids:
                return 0.0
            weight *= len(kids)
            state = kids[int(rng.integers(len(kids)))] if len(kids) > 1 else kids[0]
            t += 1
        return weight

    def estimate(self, state, t: int, n: int, rng: np.random.Generator) -> float:
        if t == self.oracle.horizon:
            return 1.0 if self.oracle.complete(state) else 0.0
        if not self.oracle.viable(state, t):
            return 0.0
        return math.fsum(self.dive(state, t, rng) for _ in range(n)) / n

    def feedback(self, prefix: Sequence[int], n: int, seed: int) -> FlexibilityFeedback:
        if n < 1:
            raise ValueError("sample_count must be >= 1")
        oracle = self.oracle
        t = len(prefix)
        rng = np.random.default_rng([int(seed), t, *[int(a) for a in prefix]])
        state = oracle.replay(prefix)
        estimates = []
        for a in range(oracle.n_levels):
            child = None if state is None else oracle.advance(state, t, a)
            estimates.append(0.0 if child is None else self.estimate(child, t + 1, n, rng))
        total = math.fsum(estimates)
        probs = tuple(e / total for e in estimates) if total > 0 else tuple(0.0 for _ in estimates)
        return FlexibilityFeedback(probs, "sampled", tuple(estimates), None, n)


def sampled_mef(oracle, prefix: Sequence[int], sample_count: int, rng_seed: int) -> FlexibilityFeedback:
    """Normalized per-action tree-size estimates; deterministic per (seed, prefix)."""
    return TreeSizeSampler(oracle).feedback(prefix, sample_count, rng_seed)


class ExactProvider:
    """Feedback provider backed by exact enumeration (shared memo across slots)."""

    name = "exact"

    def __init__(self, oracle, node_budget=DEFAULT_NODE_BUDGET):
        self.counter = ContinuationCounter(oracle, node_budget)

    def __call__(self, prefix: Sequence[int]) -> FlexibilityFeedback:
        return self.counter.feedback(prefix)


class SampledProvider:
    name = "sampled"

    def __init__(self, oracle, sample_count: int = 32, seed: int = 0):
        self.sampler = TreeSizeSampler(oracle)
        self.sample_count = sample_count
        self.seed = seed

    def __call__(self, prefix: Sequence[int]) -> FlexibilityFeedback:
        return self.sampler.feedback(prefix, self.sample_count, self.seed)
