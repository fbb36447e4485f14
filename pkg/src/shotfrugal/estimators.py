"""Estimator-style wrappers around the protocol and the landscape.

``QAOAParameterTuner`` fits QAOA parameters to one problem instance and
``EnergyLandscape`` fits a grid that then predicts energies at arbitrary
parameter points. Both follow the scikit-learn conventions: constructor
arguments are hyperparameters, ``fit`` returns ``self``, and learned state
lives in trailing-underscore attributes.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .landscape import DEFAULT_RESOLUTION, DEFAULT_WIDTH, centered_bounds, compute_landscape, interpolate
from .metrics import context_and_hamiltonian, expected_ar
from .problems import MaxCutInstance, PortfolioInstance, rescale_instance
from .protocol import SAMPLED, ProtocolConfig, family_of, initial_parameters, run_protocol
from .simulator import XYRing, default_mixer, run_qaoa, sample_bitstrings


def check_instance(inst):
    """Reject anything that is not a problem instance."""
    if not isinstance(inst, (MaxCutInstance, PortfolioInstance)):
        raise TypeError(f"expected a MaxCutInstance or PortfolioInstance, got {type(inst).__name__}")
    return inst


def check_depth(p) -> int:
    if isinstance(p, bool) or int(p) != p or p < 1:
        raise ValueError(f"p must be a positive integer, got {p!r}")
    return int(p)


class QAOAParameterTuner(BaseEstimator):
    """Shot-budgeted fine-tuning of QAOA parameters for a single instance.

    After ``fit``: ``params_`` (for the rescaled instance), ``divisor_``,
    ``result_`` (the full :class:`ProtocolResult`), ``ar_`` and
    ``relative_improvement_``.
    """

    def __init__(self, p=1, total_shots=10_000, extra_evals=2, rhobeg=None,
                 optimizer="linear_trust_region", backend=SAMPLED, seed=0, trotter_reps=1, table=None):
        self.p = p
        self.total_shots = total_shots
        self.extra_evals = extra_evals
        self.rhobeg = rhobeg
        self.optimizer = optimizer
        self.backend = backend
        self.seed = seed
        self.trotter_reps = trotter_reps
        self.table = table

    def _config(self):
        return ProtocolConfig(total_shots=self.total_shots, extra_evals=self.extra_evals, rhobeg=self.rhobeg,
                              optimizer=self.optimizer, seed=self.seed, backend=self.backend,
                              trotter_reps=self.trotter_reps)

    def fit(self, X, y=None, reference=None):
        inst = check_instance(X)
        p = check_depth(self.p)
        result = run_protocol(inst, p, self._config(), table=self.table, reference=reference)
        self.result_ = result
        self.params_ = result.final_params
        self.divisor_ = result.divisor
        self.ar_ = result.ar_final
        self.relative_improvement_ = result.relative_improvement
        return self

    def _prepared(self, X):
        scaled, _ = rescale_instance(check_instance(X))
        mixer = XYRing(self.trotter_reps) if isinstance(scaled, PortfolioInstance) else default_mixer(scaled)
        return scaled, mixer

    def statevector(self, X):
        check_is_fitted(self, "params_")
        scaled, mixer = self._prepared(X)
        return run_qaoa(scaled, self.params_, mixer)

    def score(self, X, y=None):
        """Exact approximation ratio of the fitted parameters on ``X``."""
        check_is_fitted(self, "params_")
        scaled, mixer = self._prepared(X)
        ctx, h = context_and_hamiltonian(scaled)
        return expected_ar(run_qaoa(scaled, self.params_, mixer, h=h), h, ctx)

    def sample(self, X, shots, seed=0):
        """Measured bitstrings (as integers) from the fitted circuit."""
        return sample_bitstrings(self.statevector(X), shots, seed)


class EnergyLandscape(BaseEstimator):
    """Grid of exact energy means and stds; ``predict`` interpolates.

    The box defaults to ``width`` per dimension around the fixed initial
    parameters of the instance's family. Points passed to ``predict`` are
    raw parameter vectors ``(gamma..., beta...)`` for the rescaled instance.
    """

    def __init__(self, p=1, resolution=DEFAULT_RESOLUTION, width=DEFAULT_WIDTH, center=None, table=None):
        self.p = p
        self.resolution = resolution
        self.width = width
        self.center = center
        self.table = table

    def fit(self, X, y=None):
        inst = check_instance(X)
        p = check_depth(self.p)
        scaled, _ = rescale_instance(inst)
        if self.center is None:
            center = initial_parameters(family_of(scaled), p, self.table).to_vector()
        else:
            center = check_array(np.atleast_2d(self.center), ensure_2d=True).reshape(-1)
        self.grid_ = compute_landscape(scaled, p, bounds=centered_bounds(center, self.width),
                                       resolution=self.resolution, center=center)
        self.n_features_in_ = self.grid_.dims
        return self

    def _points(self, X):
        check_is_fitted(self, "grid_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, the landscape has {self.n_features_in_}")
        return X

    def predict(self, X):
        """Interpolated mean energy at each row of ``X``."""
        return np.array([interpolate(self.grid_, row)[0] for row in self._points(X)])

    def predict_std(self, X):
        return np.array([interpolate(self.grid_, row)[1] for row in self._points(X)])
