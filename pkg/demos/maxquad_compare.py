"""Max of random convex quadratics: both descent methods against Polyak.

Run with ``python3 demos/maxquad_compare.py``.  Prints the gap after a fixed
budget of oracle calls and the tail rate of the adaptive method.
"""

import numpy as np

from srdescent import SolverConfig, gen_max_quad, oracle1_view, oracle2_view, run_algorithm1, run_algorithm2, run_polyak
from srdescent.linalg import RngStream

n, m, budget = 50, 10, 10_000

for seed in (1, 2, 3):
    inst = gen_max_quad(n, m, RngStream(seed))
    x0 = RngStream(seed).spawn(1).normal(n)
    cfg = SolverConfig(max_calls=budget, f_target=1e-12)
    t1 = run_algorithm1(oracle2_view(inst), x0, cfg)
    t2 = run_algorithm2(oracle2_view(inst), x0, cfg)
    tp = run_polyak(oracle1_view(inst), 0.0, x0, budget)

    # slope of log10 f over the last outer iterations (f* = 0)
    f = np.array([r.f for r in t2.records[-30:]])
    k = np.array([r.k for r in t2.records[-30:]])
    slope = np.polyfit(k, np.log10(f), 1)[0]

    print(f"seed {seed}: SRDescent {t1.final_f:.2e} ({t1.total_calls} calls), "
          f"adapt {t2.final_f:.2e} ({t2.total_calls} calls, slope {slope:.2f}/iter), "
          f"Polyak {tp.final_f:.2e} ({tp.total_calls} calls)")
