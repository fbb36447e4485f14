"""The end-to-end parameter-setting pipeline.

``run_protocol`` rescales the instance, starts from a fixed
instance-independent parameter set, puts gamma and beta on a common scale,
splits the shot budget evenly over ``2p+1+extra_evals`` evaluations and
fine-tunes with the linear trust-region method. Quality is always reported
from exact statevector evaluation of the parameters found.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from . import __version__
from ._utils import derive_seed
from .dfo import (BudgetPlan, OptimizationTrace, allocate_budget, minimize_linear_trust_region,
                  run_optimizer, unmetered_plan)
from .exceptions import DegenerateError, MissingEntryError
from .landscape import DEFAULT_RESOLUTION, DEFAULT_WIDTH, LandscapeOracle, centered_bounds, compute_landscape
from .metrics import ArContext, expected_ar, relative_ar_improvement
from .problems import (PortfolioInstance, build_hamiltonian, generate_maxcut_instance, generate_po_instance,
                       rescale_instance)
from .simulator import QaoaParams, XYRing, default_mixer, expectation_energy, run_qaoa, sample_bitstrings

MAXCUT_3REGULAR = "maxcut_3regular"
PO_SK = "po_sk"
FAMILIES = (MAXCUT_3REGULAR, PO_SK)

EXACT = "exact"
SAMPLED = "sampled"
LANDSCAPE = "landscape"
BACKENDS = (EXACT, SAMPLED, LANDSCAPE)

DEFAULT_RHOBEG = {MAXCUT_3REGULAR: 0.1, PO_SK: 0.5}


def family_of(inst) -> str:
    return PO_SK if isinstance(inst, PortfolioInstance) else MAXCUT_3REGULAR


def objective_sign(inst) -> float:
    """The optimizer minimises; MaxCut maximises the cut, so it is negated."""
    return 1.0 if isinstance(inst, PortfolioInstance) else -1.0


# -- fixed parameters -------------------------------------------------------------

FixedParameterTable = Dict[Tuple[str, int], QaoaParams]


def load_fixed_table(path=None) -> FixedParameterTable:
    """Read a fixed-parameter table; the packaged one when ``path`` is None."""
    if path is None:
        text = resources.files("shotfrugal").joinpath("data/fixed_params.json").read_text()
    else:
        text = Path(path).read_text()
    raw = json.loads(text)
    table = {}
    for family, block in raw["families"].items():
        for p, entry in block["params"].items():
            params = QaoaParams(entry["gamma"], entry["beta"])
            if params.p != int(p):
                raise ValueError(f"{family} p={p}: entry has {params.p} layers")
            table[(family, int(p))] = params
    return table


_DEFAULT_TABLE: Optional[FixedParameterTable] = None


def default_table() -> FixedParameterTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = load_fixed_table()
    return _DEFAULT_TABLE


def initial_parameters(family: str, p: int, table: Optional[FixedParameterTable] = None) -> QaoaParams:
    table = default_table() if table is None else table
    try:
        return table[(family, int(p))]
    except KeyError:
        raise MissingEntryError(f"no fixed parameters for family={family!r}, p={p}") from None


@dataclass(frozen=True)
class ParamScaling:
    """Optimizer coordinates are ``u = (gamma / s_gamma, beta / s_beta)``."""

    s_gamma: float
    s_beta: float

    def scale(self, params: QaoaParams) -> np.ndarray:
        return np.concatenate([params.gamma / self.s_gamma, params.beta / self.s_beta])

    def unscale_vector(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        p = u.size // 2
        return np.concatenate([u[:p] * self.s_gamma, u[p:] * self.s_beta])

    def unscale(self, u) -> QaoaParams:
        return QaoaParams.from_vector(self.unscale_vector(u))


def build_param_scaling(initial: QaoaParams) -> ParamScaling:
    sg = float(np.max(np.abs(initial.gamma)))
    sb = float(np.max(np.abs(initial.beta)))
    return ParamScaling(sg if sg > 0 else 1.0, sb if sb > 0 else 1.0)


def interp_params(params: QaoaParams) -> QaoaParams:
    """Linear interpolation of a depth-p schedule to depth p+1."""
    p = params.p

    def stretch(v):
        padded = np.concatenate([[0.0], v, [0.0]])
        return np.array([((i - 1) / p) * padded[i - 1] + ((p - i + 1) / p) * padded[i]
                         for i in range(1, p + 2)])

    return QaoaParams(stretch(params.gamma), stretch(params.beta))


# -- oracles ------------------------------------------------------------------------

class SimulatorOracle:
    """Energy oracle backed by the statevector simulator.

    ``sampled=True`` averages the energies of ``shots`` measured bitstrings;
    otherwise the exact expectation is returned and ``shots`` is ignored.
    """

    def __init__(self, inst, scaling: ParamScaling, sampled: bool, h=None, mixer=None,
                 keep_samples: bool = False):
        self.inst = inst
        self.scaling = scaling
        self.sampled = sampled
        self.h = build_hamiltonian(inst) if h is None else h
        self.mixer = default_mixer(inst) if mixer is None else mixer
        self.sign = objective_sign(inst)
        self.dimension = None  # set by the caller once p is known
        self.samples = [] if keep_samples else None

    def evaluate(self, point, shots, seed):
        sv = run_qaoa(self.inst, self.scaling.unscale(point), self.mixer, h=self.h)
        if not self.sampled:
            return self.sign * expectation_energy(sv, self.h)
        draws = sample_bitstrings(sv, shots, seed)
        if self.samples is not None:
            self.samples.append(draws)
        return self.sign * float(self.h.energies[draws].mean())


def _simulator_oracle(inst, p, scaling, sampled, h=None, mixer=None, keep_samples=False):
    oracle = SimulatorOracle(inst, scaling, sampled, h=h, mixer=mixer, keep_samples=keep_samples)
    oracle.dimension = 2 * p
    return oracle


# -- reference optimum ------------------------------------------------------------------

def optimize_reference(inst, p: int, table: Optional[FixedParameterTable] = None,
                       initial: Optional[QaoaParams] = None, rhobeg: Optional[float] = None,
                       max_evals: Optional[int] = None, rhoend: float = 1e-6,
                       multistart: int = 0, seed: int = 0, h=None, mixer=None):
    """Noiseless fine-tuning from the protocol's initial point.

    Returns ``(params, ar_opt)``. ``multistart`` adds that many extra starts
    drawn uniformly within ``rhobeg`` of the initial point (scaled space).
    """
    initial = initial_parameters(family_of(inst), p, table) if initial is None else initial
    rhobeg = DEFAULT_RHOBEG[family_of(inst)] if rhobeg is None else rhobeg
    max_evals = 500 * p if max_evals is None else max_evals
    h = build_hamiltonian(inst) if h is None else h
    ctx = ArContext.for_instance(inst, h)
    scaling = build_param_scaling(initial)
    oracle = _simulator_oracle(inst, p, scaling, sampled=False, h=h, mixer=mixer)
    plan = unmetered_plan(2 * p, max_evals)
    u0 = scaling.scale(initial)
    starts = [u0]
    rng = np.random.default_rng(derive_seed(seed, "multistart"))
    for _ in range(multistart):
        starts.append(u0 + rng.uniform(-rhobeg, rhobeg, size=u0.size))
    best_value, best_u = math.inf, u0
    for u in starts:
        trace = minimize_linear_trust_region(oracle, u, rhobeg, plan, rhoend=rhoend, seed=seed)
        if trace.best_value < best_value:
            best_value, best_u = trace.best_value, trace.best_point
    params = scaling.unscale(best_u)
    sv = run_qaoa(inst, params, oracle.mixer, h=h)
    return params, expected_ar(sv, h, ctx)


# -- the pipeline -------------------------------------------------------------------------

@dataclass(frozen=True)
class ProtocolConfig:
    total_shots: int = 10_000
    extra_evals: int = 2
    rhobeg: Optional[float] = None  # None: 0.1 for MaxCut, 0.5 for PO
    optimizer: str = "linear_trust_region"
    seed: int = 0
    backend: str = SAMPLED
    landscape_resolution: int = DEFAULT_RESOLUTION
    landscape_width: float = DEFAULT_WIDTH
    trotter_reps: int = 1

    def rhobeg_for(self, inst) -> float:
        return DEFAULT_RHOBEG[family_of(inst)] if self.rhobeg is None else float(self.rhobeg)


@dataclass
class ProtocolResult:
    initial_params: QaoaParams
    final_params: QaoaParams
    trace: OptimizationTrace
    ar_ini: float
    ar_final: float
    ar_opt: float
    relative_improvement: Optional[float]
    divisor: float
    plan: BudgetPlan
    config: ProtocolConfig
    degenerate: bool = False
    clamp_events: int = 0
    samples: Optional[list] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        scaling = build_param_scaling(self.initial_params)
        return {
            "library_version": __version__,
            "config": asdict(self.config),
            "plan": asdict(self.plan),
            "divisor": self.divisor,
            "initial_params": {"gamma": self.initial_params.gamma.tolist(),
                               "beta": self.initial_params.beta.tolist()},
            "final_params": {"gamma": self.final_params.gamma.tolist(),
                             "beta": self.final_params.beta.tolist()},
            "ar_ini": self.ar_ini,
            "ar_final": self.ar_final,
            "ar_opt": self.ar_opt,
            "relative_improvement": self.relative_improvement,
            "degenerate": self.degenerate,
            "clamp_events": self.clamp_events,
            "trace": {
                "termination_reason": self.trace.termination_reason,
                "best_value": self.trace.best_value,
                "best_point": None if self.trace.best_point is None else self.trace.best_point.tolist(),
                "records": [{"point": r.point.tolist(), "params": scaling.unscale_vector(r.point).tolist(),
                             "value": r.value, "shots": r.shots, "cumulative_shots": r.cumulative_shots}
                            for r in self.trace.records],
            },
        }


def _mixer_for(inst, config):
    return XYRing(config.trotter_reps) if isinstance(inst, PortfolioInstance) else default_mixer(inst)


def run_protocol(inst, p: int, config: ProtocolConfig = ProtocolConfig(),
                 table: Optional[FixedParameterTable] = None, backend: Optional[str] = None,
                 reference: Optional[Tuple[QaoaParams, float]] = None, grid=None,
                 record_samples: bool = False) -> ProtocolResult:
    """Rescale, initialise, scale, allocate, fine-tune, then evaluate exactly.

    ``reference`` short-circuits the ``(params, ar_opt)`` computation when a
    batch run already has it; ``grid`` supplies a precomputed landscape for
    the landscape backend (built on the *rescaled* instance).
    """
    backend = config.backend if backend is None else backend
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    config = replace(config, backend=backend)

    scaled, divisor = rescale_instance(inst)
    family = family_of(scaled)
    initial = initial_parameters(family, p, table)
    scaling = build_param_scaling(initial)
    plan = allocate_budget(config.total_shots, p, config.extra_evals)
    rhobeg = config.rhobeg_for(scaled)
    mixer = _mixer_for(scaled, config)
    h = build_hamiltonian(scaled)
    ctx = ArContext.for_instance(scaled, h)

    if backend == LANDSCAPE:
        if grid is None:
            grid = compute_landscape(scaled, p, mixer,
                                     bounds=centered_bounds(initial.to_vector(), config.landscape_width),
                                     resolution=config.landscape_resolution, center=initial.to_vector())
        oracle = LandscapeOracle(grid, sign=objective_sign(scaled), to_params=scaling.unscale_vector)
    else:
        oracle = _simulator_oracle(scaled, p, scaling, sampled=(backend == SAMPLED), h=h, mixer=mixer,
                                   keep_samples=record_samples)

    trace = run_optimizer(config.optimizer, oracle, scaling.scale(initial), plan, rhobeg, seed=config.seed)
    final = scaling.unscale(trace.best_point) if trace.best_point is not None else initial

    ar_ini = expected_ar(run_qaoa(scaled, initial, mixer, h=h), h, ctx)
    ar_final = expected_ar(run_qaoa(scaled, final, mixer, h=h), h, ctx)
    if reference is None:
        # the reference ignores config.rhobeg so that step-size sweeps share one ar_opt
        reference = optimize_reference(scaled, p, table, initial=initial, h=h, mixer=mixer)
    ar_opt = float(reference[1])
    try:
        rel = relative_ar_improvement(ar_final, ar_ini, ar_opt)
        degenerate = False
    except DegenerateError:
        rel, degenerate = None, True

    return ProtocolResult(
        initial_params=initial, final_params=final, trace=trace, ar_ini=ar_ini, ar_final=ar_final,
        ar_opt=ar_opt, relative_improvement=rel, divisor=divisor, plan=plan, config=config,
        degenerate=degenerate, clamp_events=getattr(oracle, "clamp_events", 0),
        samples=getattr(oracle, "samples", None) if record_samples else None,
    )


# -- fallback table generator ------------------------------------------------------------

def _family_instances(family, n, count, seed):
    out = []
    for i in range(count):
        s = derive_seed(seed, family, n, i)
        if family == MAXCUT_3REGULAR:
            inst = generate_maxcut_instance(n, s, weighted=False)
        else:
            inst = generate_po_instance(n, s)
        out.append(rescale_instance(inst)[0])
    return out


def _p1_start(instances, gamma_max, resolution=48):
    """Maximiser of the instance-averaged p=1 AR over ``(0, gamma_max] x [-pi/4, pi/4]``."""
    gammas = np.linspace(gamma_max / resolution, gamma_max, resolution)
    betas = np.linspace(-math.pi / 4, math.pi / 4, resolution)
    total = np.zeros((resolution, resolution))
    for inst in instances:
        h = build_hamiltonian(inst)
        ctx = ArContext.for_instance(inst, h)
        for a, g in enumerate(gammas):
            for b, be in enumerate(betas):
                total[a, b] += expected_ar(run_qaoa(inst, QaoaParams([g], [be]), h=h), h, ctx)
    a, b = np.unravel_index(np.argmax(total), total.shape)
    return QaoaParams([gammas[a]], [betas[b]])


def generate_fixed_table(family: str, p_max: int = 7, n: Optional[int] = None, count: int = 20,
                         seed: int = 0, gamma_max: float = math.pi / 2, max_evals_per_p: int = 300):
    """Average exactly optimised parameters over ``count`` random instances.

    Depth 1 starts from a grid search of the averaged landscape; each deeper
    schedule starts from the interpolated average of the previous depth, so
    every instance is tuned inside the same basin.
    """
    n = (12 if family == MAXCUT_3REGULAR else 10) if n is None else n
    instances = _family_instances(family, n, count, seed)
    start = _p1_start(instances, gamma_max)
    table = {}
    for p in range(1, p_max + 1):
        found = []
        for inst in instances:
            params, _ = optimize_reference(inst, p, initial=start, rhobeg=0.1,
                                           max_evals=max_evals_per_p * p)
            found.append(params.to_vector())
        avg = QaoaParams.from_vector(np.mean(found, axis=0))
        table[(family, p)] = avg
        start = interp_params(avg)
    return table
