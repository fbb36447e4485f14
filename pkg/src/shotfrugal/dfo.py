"""Derivative-free minimisers that pay for every evaluation in shots.

All optimizers share the same contract: an oracle exposing
``dimension`` and ``evaluate(point, shots, seed)``, a :class:`BudgetPlan`
fixing the number of evaluations and the shots each one costs, and a
``seed`` from which every per-evaluation seed is derived. They return an
:class:`OptimizationTrace` whose best point is the best *sampled* value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Protocol

import numpy as np

from ._utils import derive_seed
from .exceptions import DegenerateSimplexError, InfeasibleBudgetError

LINEAR = "linear"
QUADRATIC = "quadratic"


class ObjectiveOracle(Protocol):
    dimension: int

    def evaluate(self, point: np.ndarray, shots: int, seed: int) -> float:
        ...


@dataclass
class FunctionOracle:
    """Noiseless oracle around a plain callable; ``shots`` and ``seed`` are ignored."""

    fun: Callable[[np.ndarray], float]
    dimension: int

    def evaluate(self, point, shots, seed):
        return float(self.fun(np.asarray(point, dtype=float)))


@dataclass(frozen=True)
class BudgetPlan:
    total_shots: int
    initial_evals: int
    extra_evals: int
    shots_per_eval: int

    def __post_init__(self):
        if self.shots_per_eval < 1:
            raise InfeasibleBudgetError("shots_per_eval must be at least 1")
        if self.initial_evals < 0 or self.extra_evals < 0:
            raise ValueError("evaluation counts must be non-negative")

    @property
    def max_evals(self) -> int:
        return self.initial_evals + self.extra_evals


def initial_eval_count(p: int, model: str = LINEAR) -> int:
    d = 2 * p
    if model == LINEAR:
        return d + 1
    if model == QUADRATIC:
        return (d + 1) * (d + 2) // 2
    raise ValueError(f"unknown model {model!r}; expected 'linear' or 'quadratic'")


def allocate_budget(total_shots: int, p: int, extra_evals: int, model: str = LINEAR) -> BudgetPlan:
    """Split ``total_shots`` evenly over the initial model evaluations plus ``extra_evals``."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if extra_evals < 0:
        raise ValueError(f"extra_evals must be >= 0, got {extra_evals}")
    initial = initial_eval_count(p, model)
    n_evals = initial + extra_evals
    per_eval = int(total_shots) // n_evals
    if per_eval < 1:
        raise InfeasibleBudgetError(
            f"{total_shots} shots cannot cover {n_evals} evaluations ({initial} initial + {extra_evals} extra)")
    return BudgetPlan(int(total_shots), initial, int(extra_evals), per_eval)


def unmetered_plan(dimension: int, max_evals: int) -> BudgetPlan:
    """One nominal shot per evaluation; for noiseless reference runs."""
    initial = dimension + 1
    return BudgetPlan(max_evals, initial, max(0, max_evals - initial), 1)


@dataclass(frozen=True)
class EvalRecord:
    point: np.ndarray
    value: float
    shots: int
    cumulative_shots: int


@dataclass
class OptimizationTrace:
    records: List[EvalRecord] = field(default_factory=list)
    best_point: Optional[np.ndarray] = None
    best_value: float = math.inf
    termination_reason: str = ""
    final_point: Optional[np.ndarray] = None  # last iterate, for methods that have one

    @property
    def n_evals(self) -> int:
        return len(self.records)

    @property
    def shots_used(self) -> int:
        return self.records[-1].cumulative_shots if self.records else 0

    def points(self) -> np.ndarray:
        return np.array([r.point for r in self.records])

    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.records])


class _BudgetExhausted(Exception):
    pass


class _Meter:
    """Charges each evaluation against the plan and keeps the trace."""

    def __init__(self, oracle, plan: BudgetPlan, seed):
        self.oracle = oracle
        self.plan = plan
        self.seed = seed
        self.trace = OptimizationTrace()

    def remaining(self) -> int:
        by_count = self.plan.max_evals - self.trace.n_evals
        by_shots = (self.plan.total_shots - self.trace.shots_used) // self.plan.shots_per_eval
        return max(0, min(by_count, by_shots))

    def __call__(self, point) -> float:
        if self.remaining() < 1:
            raise _BudgetExhausted
        point = np.array(point, dtype=float)
        k = self.trace.n_evals
        value = float(self.oracle.evaluate(point, self.plan.shots_per_eval, derive_seed(self.seed, k)))
        shots = self.plan.shots_per_eval
        self.trace.records.append(EvalRecord(point, value, shots, self.trace.shots_used + shots))
        if value < self.trace.best_value:  # strict: ties keep the earliest
            self.trace.best_value = value
            self.trace.best_point = point
        return value

    def finish(self, reason, final_point=None) -> OptimizationTrace:
        self.trace.termination_reason = reason
        self.trace.final_point = None if final_point is None else np.array(final_point, dtype=float)
        return self.trace


def _check_dimension(oracle, x0, plan, need_initial):
    x0 = np.array(x0, dtype=float).reshape(-1)
    d = oracle.dimension
    if x0.size != d:
        raise ValueError(f"x0 has {x0.size} entries, oracle dimension is {d}")
    if need_initial and plan.initial_evals != d + 1:
        raise ValueError(f"plan.initial_evals={plan.initial_evals}, expected d+1={d + 1}")
    if plan.max_evals < 1 or plan.total_shots < plan.shots_per_eval:
        raise InfeasibleBudgetError("budget does not allow a single evaluation")
    return x0, d


def linear_model_gradient(points: np.ndarray, values: np.ndarray, perturb: float = 0.0) -> np.ndarray:
    """Gradient of the affine interpolant through ``d+1`` points.

    Solves ``(y_k - y_0) . g = f_k - f_0`` for ``k = 1..d``. On a singular
    system the displacement matrix is perturbed by ``perturb * I`` once.
    """
    disp = points[1:] - points[0]
    rhs = values[1:] - values[0]
    try:
        g = np.linalg.solve(disp, rhs)
        if np.all(np.isfinite(g)):
            return g
    except np.linalg.LinAlgError:
        pass
    if perturb:
        try:
            g = np.linalg.solve(disp + perturb * np.eye(disp.shape[0]), rhs)
            if np.all(np.isfinite(g)):
                return g
        except np.linalg.LinAlgError:
            pass
    raise DegenerateSimplexError("interpolation simplex is singular")


def _vertex_to_drop(Y, x_new, best, rho):
    """Index of the vertex that ``x_new`` replaces.

    Swapping vertex j for ``x_new`` scales the simplex volume by
    ``|lambda_j|``, the barycentric coordinate of ``x_new``. Every step
    leaves the best vertex along the model gradient, so always dropping the
    worst vertex flattens the simplex within a few iterations. Instead the
    vertex maximising ``|lambda_j| * max(1, dist_j / rho)**3`` goes, as in
    Powell's COBYLA: far-away, stale vertices leave first and the volume is
    kept. The best vertex is never dropped.
    """
    disp = Y[1:] - Y[0]
    try:
        tail = np.linalg.solve(disp.T, x_new - Y[0])
        lam = np.abs(np.concatenate([[1.0 - tail.sum()], tail]))
    except np.linalg.LinAlgError:
        lam = np.ones(len(Y))
    dist = np.linalg.norm(Y - Y[best], axis=1)
    weight = lam * np.maximum(1.0, dist / rho) ** 3
    weight[best] = -1.0
    return int(np.argmax(weight))


def minimize_linear_trust_region(oracle, x0, rhobeg: float, plan: BudgetPlan,
                                 rhoend: Optional[float] = None, seed: int = 0) -> OptimizationTrace:
    """Linear-model trust-region descent (a stripped-down COBYLA).

    The first ``d+1`` evaluations form the simplex ``x0, x0 + rhobeg e_i``.
    Each further evaluation steps a distance ``rho`` from the best vertex
    against the interpolated gradient; the new point enters the simplex
    when it beats the worst vertex (see :func:`_vertex_to_drop` for which
    vertex leaves), and ``rho`` halves whenever the step fails to beat the
    best vertex.
    """
    rhoend = 1e-4 * rhobeg if rhoend is None else rhoend
    if not 0 < rhoend < rhobeg:
        raise ValueError(f"need 0 < rhoend < rhobeg, got rhoend={rhoend}, rhobeg={rhobeg}")
    x0, d = _check_dimension(oracle, x0, plan, need_initial=True)
    meter = _Meter(oracle, plan, seed)

    Y = np.vstack([x0, x0 + rhobeg * np.eye(d)])
    F = np.empty(d + 1)
    try:
        for k in range(d + 1):
            F[k] = meter(Y[k])
    except _BudgetExhausted:
        return meter.finish("budget")

    rho = rhobeg
    reason = "budget"
    try:
        while True:
            if meter.remaining() < 1:
                break
            if rho < rhoend:
                reason = "rhoend"
                break
            g = linear_model_gradient(Y, F, perturb=1e-8 * rhobeg)
            gnorm = float(np.linalg.norm(g))
            if gnorm == 0.0:
                reason = "zero_gradient"
                break
            best = int(np.argmin(F))
            x_new = Y[best] - (rho / gnorm) * g
            f_new = meter(x_new)
            improved_best = f_new < F[best]
            if f_new < F.max():
                drop = _vertex_to_drop(Y, x_new, best, rho)
                Y[drop] = x_new
                F[drop] = f_new
            if not improved_best:
                rho *= 0.5
    except _BudgetExhausted:
        reason = "budget"
    if reason == "budget" and meter.trace.n_evals >= plan.max_evals:
        reason = "max_evals"
    return meter.finish(reason, final_point=Y[int(np.argmin(F))])


def minimize_nelder_mead(oracle, x0, initial_step: float, plan: BudgetPlan,
                         seed: int = 0) -> OptimizationTrace:
    """Budgeted Nelder-Mead (reflection 1, expansion 2, contraction 0.5, shrink 0.5)."""
    x0, d = _check_dimension(oracle, x0, plan, need_initial=True)
    meter = _Meter(oracle, plan, seed)
    simplex = np.vstack([x0, x0 + initial_step * np.eye(d)])
    fvals = np.empty(d + 1)
    try:
        for k in range(d + 1):
            fvals[k] = meter(simplex[k])
        while True:
            order = np.argsort(fvals, kind="stable")
            simplex, fvals = simplex[order], fvals[order]
            centroid = simplex[:-1].mean(axis=0)
            worst = simplex[-1]
            xr = centroid + (centroid - worst)
            fr = meter(xr)
            if fr < fvals[0]:
                xe = centroid + 2.0 * (centroid - worst)
                fe = meter(xe)
                if fe < fr:
                    simplex[-1], fvals[-1] = xe, fe
                else:
                    simplex[-1], fvals[-1] = xr, fr
                continue
            if fr < fvals[-2]:
                simplex[-1], fvals[-1] = xr, fr
                continue
            if fr < fvals[-1]:
                xc = centroid + 0.5 * (xr - centroid)
                fc = meter(xc)
                accept = fc <= fr
            else:
                xc = centroid + 0.5 * (worst - centroid)
                fc = meter(xc)
                accept = fc < fvals[-1]
            if accept:
                simplex[-1], fvals[-1] = xc, fc
                continue
            for k in range(1, d + 1):
                simplex[k] = simplex[0] + 0.5 * (simplex[k] - simplex[0])
                fvals[k] = meter(simplex[k])
    except _BudgetExhausted:
        pass
    reason = "max_evals" if meter.trace.n_evals >= plan.max_evals else "budget"
    return meter.finish(reason, final_point=simplex[int(np.argmin(fvals))])


def spsa_gradient(fplus: float, fminus: float, ck: float, delta: np.ndarray) -> np.ndarray:
    return (fplus - fminus) / (2.0 * ck * delta)


def minimize_spsa(oracle, x0, plan: BudgetPlan, a: float = 0.2, c: float = 0.1,
                  iterations: Optional[int] = None, seed: int = 0) -> OptimizationTrace:
    """Simultaneous-perturbation stochastic approximation, two evaluations per step.

    Gains follow the standard schedule ``a_k = a / (k + 1 + A)**0.602`` and
    ``c_k = c / (k + 1)**0.101`` with ``A = 0.1 * iterations``.
    """
    x, d = _check_dimension(oracle, x0, plan, need_initial=False)
    budget_iters = plan.max_evals // 2
    if budget_iters < 1 or plan.total_shots < 2 * plan.shots_per_eval:
        raise InfeasibleBudgetError("SPSA needs room for at least two evaluations")
    iterations = budget_iters if iterations is None else min(int(iterations), budget_iters)
    stability = 0.1 * iterations
    rng = np.random.default_rng(derive_seed(seed, "spsa-perturbations"))
    meter = _Meter(oracle, plan, seed)
    done = 0
    try:
        for k in range(iterations):
            ak = a / (k + 1 + stability) ** 0.602
            ck = c / (k + 1) ** 0.101
            delta = rng.choice(np.array([-1.0, 1.0]), size=d)
            fplus = meter(x + ck * delta)
            fminus = meter(x - ck * delta)
            x = x - ak * spsa_gradient(fplus, fminus, ck, delta)
            done += 1
    except _BudgetExhausted:
        pass
    reason = "iterations" if done == iterations and iterations < budget_iters else "max_evals"
    return meter.finish(reason, final_point=x)


OPTIMIZERS = ("linear_trust_region", "nelder_mead", "spsa")


def run_optimizer(name: str, oracle, x0, plan: BudgetPlan, rhobeg: float, seed: int = 0,
                  **options) -> OptimizationTrace:
    """Dispatch by name; ``rhobeg`` doubles as Nelder-Mead's initial step."""
    if name in ("linear_trust_region", "cobyla"):
        return minimize_linear_trust_region(oracle, x0, rhobeg, plan, seed=seed, **options)
    if name == "nelder_mead":
        return minimize_nelder_mead(oracle, x0, rhobeg, plan, seed=seed)
    if name == "spsa":
        return minimize_spsa(oracle, x0, plan, seed=seed, **options)
    raise ValueError(f"unknown optimizer {name!r}; choose from {OPTIMIZERS}")
