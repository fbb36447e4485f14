import numpy as np
import pytest

from shotfrugal.dfo import (BudgetPlan, FunctionOracle, allocate_budget, linear_model_gradient,
                            minimize_linear_trust_region, minimize_nelder_mead, minimize_spsa, spsa_gradient,
                            unmetered_plan)
from shotfrugal.exceptions import DegenerateSimplexError, InfeasibleBudgetError


class NoisyQuadratic:
    """Quadratic bowl plus seeded Gaussian noise of size 1/sqrt(shots)."""

    dimension = 3

    def __init__(self, offset=0.0):
        self.offset = offset

    def evaluate(self, point, shots, seed):
        z = np.random.default_rng(seed).standard_normal()
        return float(np.sum((point - 0.3) ** 2)) + self.offset + z / np.sqrt(shots)


def test_allocate_budget_examples():
    plan = allocate_budget(10_000, 5, 2)
    assert (plan.max_evals, plan.shots_per_eval) == (13, 769)
    plan = allocate_budget(10_000, 1, 2)
    assert (plan.max_evals, plan.shots_per_eval) == (5, 2000)
    plan = allocate_budget(10_000, 5, 2, "quadratic")
    assert (plan.max_evals, plan.shots_per_eval) == (68, 147)
    with pytest.raises(InfeasibleBudgetError):
        allocate_budget(10, 5, 2)


def test_linear_model_recovers_gradient_exactly():
    c = np.array([1.7, -0.4])
    oracle = FunctionOracle(lambda x: float(c @ x) + 3.0, 2)
    trace = minimize_linear_trust_region(oracle, [0.2, 0.5], 0.5, unmetered_plan(2, 3))
    assert trace.n_evals == 3
    g = linear_model_gradient(trace.points(), trace.values())
    np.testing.assert_allclose(g, c, atol=1e-10)


def test_linear_steps_decrease_model_by_rho_norm_g():
    c = np.array([0.6, -0.8, 0.3])
    oracle = FunctionOracle(lambda x: float(c @ x), 3)
    trace = minimize_linear_trust_region(oracle, np.zeros(3), 0.2, unmetered_plan(3, 12), rhoend=1e-12)
    vals = trace.values()
    gnorm = np.linalg.norm(c)
    best = vals[:4].min()
    for v in vals[4:]:
        # every step succeeds on a linear function, so rho stays at rhobeg
        assert v == pytest.approx(best - 0.2 * gnorm, abs=1e-12)
        best = v


def test_linear_descends_convex_bowl():
    oracle = FunctionOracle(lambda x: float(x @ x), 2)
    trace = minimize_linear_trust_region(oracle, [1.0, 1.0], 0.5, unmetered_plan(2, 50))
    assert trace.best_value < 2.0
    assert trace.n_evals <= 50


def test_linear_degenerate_simplex():
    with pytest.raises(DegenerateSimplexError):
        linear_model_gradient(np.zeros((3, 2)), np.arange(3.0))


def test_linear_plan_preconditions():
    oracle = FunctionOracle(lambda x: float(x @ x), 2)
    with pytest.raises(ValueError):
        minimize_linear_trust_region(oracle, [0, 0], 0.5, BudgetPlan(100, 4, 1, 1))
    with pytest.raises(ValueError):
        minimize_linear_trust_region(oracle, [0, 0], 0.5, unmetered_plan(2, 10), rhoend=1.0)


def test_nelder_mead_converges():
    target = np.array([0.4, -1.2])
    oracle = FunctionOracle(lambda x: float(np.sum((x - target) ** 2 * [1.0, 3.0])), 2)
    trace = minimize_nelder_mead(oracle, [0.0, 0.0], 0.5, unmetered_plan(2, 100))
    assert np.linalg.norm(trace.best_point - target) < 1e-2


def test_nelder_mead_single_extra_eval_is_reflection():
    oracle = FunctionOracle(lambda x: float(x @ x), 2)
    trace = minimize_nelder_mead(oracle, [1.0, 1.0], 0.5, unmetered_plan(2, 4))
    pts = trace.points()
    assert len(pts) == 4
    order = np.argsort(trace.values()[:3])
    centroid = pts[order[:2]].mean(axis=0)
    np.testing.assert_allclose(pts[3], 2 * centroid - pts[order[2]])
    assert trace.best_value == trace.values().min()


def test_nelder_mead_deterministic():
    plan = allocate_budget(5000, 1, 20)
    oracle = NoisyQuadratic()
    oracle.dimension = 2
    a = minimize_nelder_mead(oracle, [0, 0], 0.3, plan, seed=4)
    b = minimize_nelder_mead(oracle, [0, 0], 0.3, plan, seed=4)
    np.testing.assert_array_equal(a.points(), b.points())
    np.testing.assert_array_equal(a.values(), b.values())


def test_spsa_gradient_sign_1d():
    f = lambda x: x * x
    for x in np.linspace(-2, 2, 9):
        if x == 0:
            continue
        g = spsa_gradient(f(x + 0.1), f(x - 0.1), 0.1, np.array([1.0]))
        assert np.sign(g[0]) == np.sign(x)
        g = spsa_gradient(f(x - 0.1), f(x + 0.1), 0.1, np.array([-1.0]))
        assert np.sign(g[0]) == np.sign(x)


def test_spsa_budget_and_reproducibility():
    oracle = FunctionOracle(lambda x: float(x @ x), 2)
    plan = unmetered_plan(2, 10)
    trace = minimize_spsa(oracle, [1.0, -1.0], plan, seed=3)
    assert trace.n_evals == 10
    again = minimize_spsa(oracle, [1.0, -1.0], plan, seed=3)
    np.testing.assert_array_equal(trace.points(), again.points())


def test_spsa_decreases_quadratic():
    oracle = FunctionOracle(lambda x: float(x @ x), 2)
    x0 = np.array([1.0, -0.7])
    trace = minimize_spsa(oracle, x0, unmetered_plan(2, 100), iterations=50, seed=0)
    assert float(trace.final_point @ trace.final_point) < float(x0 @ x0)
    assert trace.best_value < float(x0 @ x0)


@pytest.mark.parametrize("method", ["linear", "nm", "spsa"])
def test_shot_accounting_and_constant_shift(method):
    plan = allocate_budget(3000, 1, 7)
    plan = BudgetPlan(plan.total_shots, 4, plan.extra_evals, plan.shots_per_eval)
    runs = []
    for offset in (0.0, 8.0):
        oracle = NoisyQuadratic(offset)
        if method == "linear":
            t = minimize_linear_trust_region(oracle, [0, 0, 0], 0.2, plan, seed=1)
        elif method == "nm":
            t = minimize_nelder_mead(oracle, [0, 0, 0], 0.2, plan, seed=1)
        else:
            t = minimize_spsa(oracle, [0, 0, 0], plan, seed=1)
        assert sum(r.shots for r in t.records) <= plan.total_shots
        assert t.n_evals <= plan.max_evals
        assert t.best_value == t.values().min()
        assert t.records[-1].cumulative_shots == sum(r.shots for r in t.records)
        runs.append(t)
    np.testing.assert_allclose(runs[0].points(), runs[1].points(), atol=1e-9)
    np.testing.assert_allclose(runs[0].values() + 8.0, runs[1].values(), atol=1e-9)


def test_best_value_ties_keep_earliest():
    oracle = FunctionOracle(lambda x: 1.0, 2)
    trace = minimize_linear_trust_region(oracle, [0.0, 0.0], 0.5, unmetered_plan(2, 3))
    np.testing.assert_array_equal(trace.best_point, [0.0, 0.0])
    assert trace.termination_reason in ("max_evals", "zero_gradient")
