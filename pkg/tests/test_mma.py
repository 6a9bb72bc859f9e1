import numpy as np
import pytest
from scipy.optimize import minimize

from topomulti.mma import KKT_TOL, MMAError, MmaParams, mma_init, mma_step


def run_quadratic(n=5, steps=50, params=None):
    x = np.full(n, 0.8)
    state = mma_init(x, 0.0, 1.0, params)
    xs, fs = [x], [np.sum((x - 0.3) ** 2)]
    for _ in range(steps):
        x = mma_step(state, x, fs[-1], 2 * (x - 0.3))
        xs.append(x)
        fs.append(np.sum((x - 0.3) ** 2))
    return np.array(xs), np.array(fs), state


def run_reciprocal(steps=60, params=None):
    """min x1 + x2  s.t.  1/x1 + 1/x2 <= 4,  0.1 <= x <= 1."""
    x = np.array([0.9, 0.6])
    state = mma_init(x, 0.1, 1.0, params)
    history = [x]
    for _ in range(steps):
        g = np.array([1 / x[0] + 1 / x[1] - 4.0])
        dg = np.array([[-1 / x[0] ** 2, -1 / x[1] ** 2]])
        x = mma_step(state, x, x.sum(), np.ones(2), g, dg)
        assert state.kkt_residual <= KKT_TOL
        history.append(x)
    return np.array(history), state


class TestInit:
    def test_default_asymptotes(self):
        s = mma_init(np.full(4, 0.5), 0.0, 1.0)
        np.testing.assert_array_equal(s.low, 0.0)
        np.testing.assert_array_equal(s.upp, 1.0)

    def test_asymmetric_bounds(self):
        s = mma_init([0.5], 0.2, 0.8)
        assert s.low[0] == pytest.approx(0.2) and s.upp[0] == pytest.approx(0.8)

    def test_out_of_bounds(self):
        with pytest.raises(ValueError):
            mma_init([1.2], 0.0, 1.0)
        with pytest.raises(ValueError):
            mma_init([0.5], 0.6, 0.4)

    def test_degenerate_bound_freezes_variable(self):
        lb = np.array([0.0, 0.4])
        ub = np.array([1.0, 0.4])
        x = np.array([0.5, 0.4])
        s = mma_init(x, lb, ub)
        assert s.frozen.tolist() == [False, True]
        for _ in range(5):
            x = mma_step(s, x, 0.0, np.array([1.0, 1.0]))
            assert x[1] == 0.4


class TestConvergence:
    def test_quadratic_reaches_optimum(self):
        xs, _, _ = run_quadratic()
        within = np.flatnonzero(np.max(np.abs(xs - 0.3), axis=1) < 1e-4)
        assert within.size and within[0] <= 50
        np.testing.assert_allclose(xs[-1], 0.3, atol=1e-4)

    def test_quadratic_objective_non_increasing_after_three_steps(self):
        _, fs, _ = run_quadratic()
        assert np.all(np.diff(fs[3:]) <= 1e-15)

    def test_constrained_reciprocal_problem(self):
        xs, state = run_reciprocal()
        np.testing.assert_allclose(xs[-1], [0.5, 0.5], atol=1e-3)
        assert state.lam[0] == pytest.approx(0.25, rel=1e-2)  # dL/dx = 1 - lam / x^2 = 0

    def test_without_constraints_lam_is_empty(self):
        _, _, state = run_quadratic(steps=2)
        assert state.lam.size == 0


class TestStepInvariants:
    @pytest.mark.parametrize("move", [0.05, 0.2, 0.5])
    def test_box_and_move_limit(self, move):
        rng = np.random.default_rng(0)
        params = MmaParams(move=move)
        n = 40
        x = rng.uniform(0, 1, n)
        state = mma_init(x, 0.0, 1.0, params)
        for _ in range(30):
            df = rng.normal(size=n)
            g = np.array([x.mean() - 0.4])
            dg = np.full((1, n), 1.0 / n)
            x_new = mma_step(state, x, 0.0, df, g, dg)
            assert np.all(x_new >= 0.0) and np.all(x_new <= 1.0)
            assert np.max(np.abs(x_new - x)) <= move + 1e-15
            assert np.all(state.low < x) and np.all(x < state.upp)
            assert state.kkt_residual <= KKT_TOL
            x = x_new

    def test_deterministic(self):
        a, _ = run_reciprocal(steps=15)
        b, _ = run_reciprocal(steps=15)
        assert np.array_equal(a, b)

    def test_rejects_non_finite_gradients(self):
        state = mma_init([0.5, 0.5], 0.0, 1.0)
        with pytest.raises(MMAError):
            mma_step(state, np.array([0.5, 0.5]), 1.0, np.array([np.nan, 1.0]))

    def test_rejects_shape_mismatch(self):
        state = mma_init([0.5, 0.5], 0.0, 1.0)
        with pytest.raises(ValueError):
            mma_step(state, np.array([0.5, 0.5]), 1.0, np.ones(2), np.array([0.1]), np.ones((1, 3)))

    def test_asymptotes_expand_on_monotone_progress(self):
        x = np.array([0.9])
        state = mma_init(x, 0.0, 1.0)
        widths = []
        for _ in range(4):
            x = mma_step(state, x, 0.0, np.array([1.0]))
            widths.append(float(state.upp[0] - state.low[0]))
        # from the third step on, consecutive moves agree in sign
        assert widths[3] / widths[2] > 1.0


def test_first_step_solves_the_convex_subproblem():
    """Build the first-step approximation from its textbook definition and solve
    it with a general-purpose NLP solver."""
    rng = np.random.default_rng(7)
    n = 6
    x = rng.uniform(0.3, 0.7, n)
    df0 = rng.normal(size=n)
    g = np.array([0.05, -0.02])
    dg = rng.normal(size=(2, n))
    prm = MmaParams(move=0.3)

    state = mma_init(x, 0.0, 1.0, prm)
    x_mma = mma_step(state, x, 0.0, df0, g, dg)

    low, upp = x - 0.5, x + 0.5
    lo = np.maximum.reduce([np.zeros(n), low + 0.1 * (x - low), x - prm.move])
    hi = np.minimum.reduce([np.ones(n), upp - 0.1 * (upp - x), x + prm.move])

    def coeffs(grad):
        pos, neg = np.maximum(grad, 0), np.maximum(-grad, 0)
        p = (upp - x) ** 2 * (1.001 * pos + 0.001 * neg + prm.raa0)
        q = (x - low) ** 2 * (0.001 * pos + 1.001 * neg + prm.raa0)
        return p, q

    def approx(grad, value, z):
        p, q = coeffs(grad)
        return value + np.sum(p / (upp - z) + q / (z - low) - p / (upp - x) - q / (x - low))

    cons = [{"type": "ineq", "fun": (lambda z, i=i: -approx(dg[i], g[i], z))} for i in range(2)]
    ref = minimize(lambda z: approx(df0, 0.0, z), x, method="SLSQP", bounds=list(zip(lo, hi)),
                   constraints=cons, options={"ftol": 1e-14, "maxiter": 500})
    assert ref.success
    # the elastic variables stay at zero when the approximation is feasible
    assert all(-c["fun"](ref.x) <= 1e-10 for c in cons)
    np.testing.assert_allclose(x_mma, ref.x, atol=1e-6)
