"""Compare the compiled and pure-Python flow kernels on fleet-sized feasibility checks.

    python3 benchmarks/bench_flow.py [--cases 200] [--sessions 30] [--slots 24]
"""
import argparse
import timeit

import numpy as np

from flexagg._kernels import _flow_py

try:
    from flexagg._kernels import _flowcore
except ImportError:
    _flowcore = None


def make_case(rng, n_sess, n_slot):
    """Random sessions plus slot totals taken from a schedule that serves them, so most
    checks are feasible and the kernel has to route the full flow."""
    start = rng.integers(0, n_slot // 2, n_sess)
    end = np.minimum(start + rng.integers(2, n_slot // 2 + 1, n_sess), n_slot - 1)
    rate = rng.integers(1, 3, n_sess)
    load = np.zeros(n_slot, dtype=np.int64)
    energy = np.zeros(n_sess, dtype=np.int64)
    for j in range(n_sess):
        per_slot = rng.integers(0, rate[j] + 1, end[j] - start[j] + 1)
        energy[j] = per_slot.sum()
        load[start[j] : end[j] + 1] += per_slot
    if rng.random() < 0.2:
        load[rng.integers(0, n_slot)] += 1  # occasionally infeasible
    args = [energy, rate, start, end, load, load]
    return [[int(x) for x in a] for a in args]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cases", type=int, default=200)
    ap.add_argument("--sessions", type=int, default=30)
    ap.add_argument("--slots", type=int, default=24)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    cases = [make_case(rng, args.sessions, args.slots) for _ in range(args.cases)]
    backends = {"python": _flow_py}
    if _flowcore is not None:
        backends["compiled"] = _flowcore

    answers = {name: [bool(m.schedule_feasible(*c)) for c in cases] for name, m in backends.items()}
    if len({tuple(a) for a in answers.values()}) != 1:
        raise SystemExit("backends disagree")
    n_true = sum(answers["python"])
    print(f"{args.cases} checks, {args.sessions} sessions x {args.slots} slots, {n_true} feasible")

    per_call = {}
    for name, m in backends.items():
        fn = m.schedule_feasible
        reps = 3 if name == "python" else 20
        best = min(timeit.repeat(lambda: [fn(*c) for c in cases], number=1, repeat=reps))
        per_call[name] = best / len(cases)
        print(f"{name:>9}: {per_call[name] * 1e6:9.1f} us per check")
    if "compiled" in per_call:
        print(f" speed-up: {per_call['python'] / per_call['compiled']:.1f}x")
    else:
        print("compiled extension not built; only the pure backend was timed")


if __name__ == "__main__":
    main()
