"""Descent along the regularized direction for f = h(c(x)).

For f(x) = x^2 / 2 written as h(c(x)) with h(u) = u, c(x) = x^2 / 2 we have
L = beta = 1.  A single piece gives g = f'(x) = x, so
f(x - eps g) = f(x) - eps (1 - eps/2) ||g||^2: at eps = 1/2 the decrease is
3/4 of eps ||g||^2, not the full amount.  The factor 1 - L beta eps / 2 is what holds.
"""

import numpy as np

from srdescent import CompositeProblem, direction_composite

prob = CompositeProblem(lambda x: (np.array([0.5 * x[0] ** 2]), np.array([[x[0]]])), [[1.0]], [0.0])
x = np.array([1.0])
for eps in (0.5, 0.25, 0.05):
    g = direction_composite(prob, x, eps).g
    dec = prob.value(x) - prob.value(x - eps * g)
    print(f"eps {eps:.2f}: g {g[0]:.4f}, decrease / (eps ||g||^2) = {dec / (eps * g @ g):.4f}, "
          f"1 - eps/2 = {1 - eps / 2:.4f}")
