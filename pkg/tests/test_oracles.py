import warnings

import numpy as np
import pytest

from srdescent.bench.fixtures import QuadraticMap, random_kink
from srdescent.bench.verify import PROPERTIES, min_norm_limit_errors, kink_cases
from srdescent.linalg import RngStream
from srdescent.oracles import (
    AffineMarginalStructure,
    Box,
    CompositeProblem,
    DegeneracyWarning,
    MarginalQPProblem,
    OracleError,
    Simplex,
    direction_composite,
    direction_marginal_licq,
    direction_max_of_smooth,
    direction_min_of_smooth,
    goldstein_sampled_direction,
    marginal_inner,
    min_norm_subgradient_bruteforce,
    prox_linear_step,
    regularized_direction_affine,
)


def lin(a, b=0.0):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    return lambda x: (float(a @ x + b), a.copy())


def test_max_2x_x_at_zero():
    s = AffineMarginalStructure(lambda x: (np.array([2 * x[0], x[0]]), np.array([[2.0, 1.0]])), Simplex(2))
    for eps in (1.0, 0.5, 0.1, 1e-3):
        rd = regularized_direction_affine(s, np.zeros(1), eps)
        assert np.allclose(rd.g, [1.0], atol=1e-12)
        assert abs(rd.reg_value - (rd.f_value - 0.5 * eps * rd.g @ rd.g)) <= 1e-8


def test_abs_via_box_at_zero():
    s = AffineMarginalStructure(lambda x: (x.copy(), np.eye(1)), Box(-np.ones(1), np.ones(1)))
    for eps in (10.0, 1.0, 1e-6):
        rd = regularized_direction_affine(s, np.zeros(1), eps)
        assert rd.g[0] == 0.0 and rd.y[0] == 0.0


def test_single_piece_is_gradient():
    p = [lambda x: (float(x @ x), 2 * x)]
    x = np.array([0.3, -1.2])
    for eps in (5.0, 1e-4):
        assert np.allclose(direction_max_of_smooth(p, x, eps).g, 2 * x)
        assert np.allclose(direction_min_of_smooth(p, x, eps).g, 2 * x)


def test_identical_pieces():
    p = [lin([1.0, 2.0])] * 3
    assert np.allclose(direction_max_of_smooth(p, np.zeros(2), 1.0).g, [1, 2])


def test_strictly_dominant_piece_limit():
    # piece 0 dominates at x; as eps -> 0 the direction tends to its gradient
    p = [lambda x: (float(x @ x) + 1.0, 2 * x), lin([3.0, -1.0])]
    x = np.array([0.5, 0.5])
    errs = [np.linalg.norm(direction_max_of_smooth(p, x, 2.0**-j).g - 2 * x) for j in range(0, 21, 4)]
    assert errs[-1] <= 1e-12


def test_min_of_smooth_examples():
    p = [lin([1.0]), lin([-1.0])]  # min{x, -x} = -|x|
    assert abs(direction_min_of_smooth(p, np.zeros(1), 1.0).g[0]) <= 1e-14
    rd = direction_min_of_smooth([lambda x: (float(x @ x), 2 * x)], np.array([1.0]), 0.5)
    assert np.isclose(rd.f_value, 1.0)


def test_composite_abs_of_quadratic():
    # h = |.| as max{u, -u}, c(x) = x^2 - 1, x = 2, eps = 1
    p = CompositeProblem(lambda x: (np.array([x[0] ** 2 - 1]), np.array([[2 * x[0]]])), [[1.0], [-1.0]], [0, 0])
    rd = direction_composite(p, np.array([2.0]), 1.0)
    assert np.isclose(rd.g[0], 0.75, atol=1e-12)
    # signed parameterization y_+ - y_- = 3/16
    assert np.isclose(rd.y[0] - rd.y[1], 3 / 16)
    assert np.isclose(prox_linear_step(p, np.array([2.0]), 1.0)[0], 1.25, atol=1e-12)


def test_composite_affine_c_matches_max_of_smooth():
    rng = RngStream(3)
    Jt, c0 = rng.normal((3, 2)), rng.normal(2)
    a, b = rng.normal((4, 2)), rng.normal(4)
    prob = CompositeProblem(lambda x: (Jt.T @ x + c0, Jt), a, b)
    pieces = [lin(Jt @ a[i], a[i] @ c0 + b[i]) for i in range(4)]
    x = rng.normal(3)
    for eps in (1.0, 0.01):
        assert np.allclose(direction_composite(prob, x, eps).g, direction_max_of_smooth(pieces, x, eps).g,
                           atol=1e-12)


def test_prox_linear_examples():
    # smooth case: single affine piece gives a gradient step
    cm = QuadraticMap(np.array([np.eye(2)]), np.array([[1.0, -1.0]]), np.zeros(1))
    p = CompositeProblem(cm, [[2.0]], [0.0])
    x = np.array([0.4, 0.1])
    assert np.allclose(prox_linear_step(p, x, 0.3), x - 0.3 * cm(x)[1] @ np.array([2.0]), atol=1e-12)
    # model-stationary point is a fixed point: |x| near 0 in c-space
    p = CompositeProblem(lambda x: (x.copy(), np.eye(1)), [[1.0], [-1.0]], [0, 0])
    assert np.allclose(prox_linear_step(p, np.zeros(1), 1.0), 0.0, atol=1e-14)


def test_oracle_error_on_nonpositive_eps():
    with pytest.raises(ValueError):
        direction_max_of_smooth([lin([1.0])], np.zeros(1), 0.0)


def test_oracle_error_carries_diagnostics():
    # starve the QP of iterations
    from srdescent import oracles

    s = AffineMarginalStructure(lambda x: (np.array([2 * x[0], x[0], -x[0]]), np.array([[2.0, 1.0, -1.0]])),
                                Simplex(3))
    orig = oracles.solve_simplex_qp
    try:
        oracles.solve_simplex_qp = lambda p, y0=None: orig(p, y0=y0, max_iter=0)
        with pytest.raises(OracleError) as ei:
            regularized_direction_affine(s, np.array([0.1]), 1.0)
        assert ei.value.diagnostics is not None
    finally:
        oracles.solve_simplex_qp = orig


def test_hiriart_urruty_min_norm():
    pieces = [lambda x: (-100.0, np.zeros(2)), lin([2, 3]), lin([-2, 3]), lin([5, 2]), lin([-5, 2])]
    assert np.allclose(min_norm_subgradient_bruteforce(pieces, np.zeros(2)), [0, 2], atol=1e-12)
    for t in (1e-3, 0.1, 1.0):
        v = min_norm_subgradient_bruteforce(pieces, np.array([t, 3 * t]))
        assert np.allclose(v, [2, 3], atol=1e-12)
    assert np.allclose(min_norm_subgradient_bruteforce([lin([1, 1])], np.zeros(2)), [1, 1])


def test_bruteforce_qp_fallback_agrees():
    rng = RngStream(4)
    G = rng.normal((14, 3))
    pieces = [lin(g) for g in G]  # 14 ties at 0, beyond the enumeration limit
    v_qp = min_norm_subgradient_bruteforce(pieces, np.zeros(3), max_enumerate=12)
    v_en = min_norm_subgradient_bruteforce(pieces, np.zeros(3), max_enumerate=20)
    assert np.linalg.norm(v_qp - v_en) <= 1e-9


def test_goldstein_examples():
    rng = RngStream(5)
    # smooth quadratic: sampled gradients are affine in the point
    A = np.diag([1.0, 3.0])
    f = lambda x: (0.5 * x @ A @ x, A @ x)  # noqa: E731
    x = np.array([1.0, -2.0])
    for eps in (1e-1, 1e-3):
        d = goldstein_sampled_direction(f, x, eps, 5, rng)
        assert np.linalg.norm(d - A @ x) <= 3.0 * eps + 1e-12
    # |x| at 0 with samples on both sides
    fa = lambda x: (abs(x[0]), np.array([1.0 if x[0] >= 0 else -1.0]))  # noqa: E731
    d, info = goldstein_sampled_direction(fa, np.array([0.0]), 1.0, 20, RngStream(6), return_info=True)
    assert info["V"].min() < 0 < info["V"].max()
    assert abs(d[0]) < 1.0
    # k = 1, sample at x itself gives the subgradient at x
    with pytest.raises(ValueError):
        goldstein_sampled_direction(fa, np.zeros(1), 1.0, 0, rng)
    d1 = goldstein_sampled_direction(fa, np.array([5.0]), 1e-9, 1, rng)
    assert d1[0] == 1.0


def test_smooth_piece_gradients_match_fd():
    rng = RngStream(7)
    for kc in kink_cases(10, seed=8):
        x = kc.xbar + rng.normal(kc.xbar.size)
        for p in kc.pieces():
            g = p(x)[1]
            fd = np.array([(p(x + 1e-6 * e)[0] - p(x - 1e-6 * e)[0]) / 2e-6 for e in np.eye(x.size)])
            assert np.linalg.norm(fd - g) <= 1e-5 * max(1.0, np.linalg.norm(g))


def test_reg_direction_invariants_random():
    rng = RngStream(9)
    for kc in kink_cases(20, seed=10):
        x = kc.xbar + 0.3 * rng.normal(kc.xbar.size)
        for eps in (1.0, 0.01):
            rd = direction_max_of_smooth(kc.pieces(), x, eps)
            assert abs(rd.reg_value - (rd.f_value - 0.5 * eps * rd.g @ rd.g)) <= 1e-8
            assert rd.f_value <= kc.value(x) + 1e-8


def test_min_norm_limit_converges_on_all_kinks():
    assert max(min_norm_limit_errors()) <= 1e-6


# ---------------------------------------------------------------------------
# marginal QP


def _marginal(n, m, seed, **over):
    rng = RngStream(seed)
    d = dict(b=rng.normal(m), c=rng.normal(m), A=rng.normal((m, n)), D=rng.normal((m, n)),
             W=np.eye(m) + 0.1 * rng.normal((m, m)), Q=np.eye(m))
    d.update(over)
    return MarginalQPProblem(**d)


def _fd(p, x, h=1e-5):
    f = lambda z: marginal_inner(p, z)["value"]  # noqa: E731
    return np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(x.size)])


def test_marginal_inactive_constraints_envelope_gradient():
    # wide box far from the unconstrained y: no active constraints
    m, n = 3, 2
    p = _marginal(n, m, 11, W=np.eye(m), c=np.zeros(m))
    x = np.array([0.1, -0.2])
    ystar = -np.linalg.solve(p.Q, p.c + p.D @ x)
    b = ystar + 0.5 + p.A @ x  # box [ystar - 0.5, ystar + 0.5] straddles y*
    p = MarginalQPProblem(b, p.c, p.A, p.D, p.W, p.Q)
    inner = marginal_inner(p, x)
    assert inner["diagnostics"]["active"].size == 0
    assert np.allclose(inner["lam_up"], 0) and np.allclose(inner["lam_lo"], 0)
    g = direction_marginal_licq(p, x, 1e-8).g
    assert np.allclose(g, p.D.T @ inner["y"] + 4 * (x @ x) * x, atol=1e-10)
    assert np.allclose(g, _fd(p, x), atol=1e-6)


def test_marginal_boundary_example():
    # x = 0, c = 0, Q = I, W = I and b = 0, so the box is [-1, 0] and y = 0 sits on it
    m, n = 2, 2
    rng = RngStream(12)
    p = MarginalQPProblem(np.zeros(m), np.zeros(m), rng.normal((m, n)), rng.normal((m, n)), np.eye(m), np.eye(m))
    inner = marginal_inner(p, np.zeros(n))
    assert np.allclose(inner["y"], 0)
    g = direction_marginal_licq(p, np.zeros(n), 1e-8).g
    assert np.allclose(g, _fd(p, np.zeros(n)), atol=1e-4)


def test_marginal_degenerate_data_reduction():
    # Q = 0, W = I, D = 0, c = 0: f = ||x||^4 and g = 4 ||x||^2 x
    m, n = 3, 4
    rng = RngStream(13)
    p = MarginalQPProblem(rng.normal(m), np.zeros(m), rng.normal((m, n)), np.zeros((m, n)), np.eye(m),
                          np.zeros((m, m)))
    x = rng.normal(n)
    assert np.isclose(marginal_inner(p, x)["value"], (x @ x) ** 2)
    assert np.allclose(direction_marginal_licq(p, x, 0.3).g, 4 * (x @ x) * x)


def test_marginal_fd_at_random_points():
    rng = RngStream(14)
    checked = 0
    for s in range(12):
        p = _marginal(4, 3, 100 + s)
        x = rng.normal(4)
        inner = marginal_inner(p, x)
        diag = inner["diagnostics"]
        if diag["degenerate"] or diag["weakly_active"]:
            continue
        g = direction_marginal_licq(p, x, 2.0**-30, inner=inner).g
        assert np.allclose(g, _fd(p, x), atol=1e-4)
        checked += 1
    assert checked >= 8


def test_marginal_degeneracy_warning():
    # two identical rows of W active together: rank-deficient active set
    A = np.zeros((2, 1))
    W = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-11]])
    p = MarginalQPProblem(np.zeros(2), np.array([-5.0, -5.0]), A, np.ones((2, 1)), W, np.eye(2))
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        rd = direction_marginal_licq(p, np.zeros(1), 0.1)
    assert rd.diagnostics["active"].size == 2 and rd.diagnostics["degenerate"]
    assert any(issubclass(w.category, DegeneracyWarning) for w in rec)


@pytest.mark.parametrize("name,fn", PROPERTIES["oracles"], ids=[n for n, _ in PROPERTIES["oracles"]])
def test_oracle_properties(name, fn):
    ok, detail = fn()
    assert ok, detail
