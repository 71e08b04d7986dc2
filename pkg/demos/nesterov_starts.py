"""Nonsmooth Chebyshev-Rosenbrock from the preset start and ten random ones."""

from srdescent import SolverConfig, gen_nesterov_cr, oracle2_view, run_algorithm1, run_algorithm2
from srdescent.bench.experiment import start_point

for n, target in ((3, 1e-5), (5, 1e-2)):
    inst = gen_nesterov_cr(n)
    starts = [inst.preset_start()] + [start_point(s, n) for s in range(1, 11)]
    for name, run in (("SRDescent", run_algorithm1), ("SRDescent-adapt", run_algorithm2)):
        calls = []
        for x0 in starts:
            tr = run(oracle2_view(inst), x0, SolverConfig(f_target=target, max_calls=100_000))
            calls.append(tr.total_calls if tr.final_f <= target else None)
        ok = [c for c in calls if c is not None]
        print(f"n={n} {name:16s} solved {len(ok)}/{len(calls)}, mean calls {sum(ok) / len(ok):.0f}")
