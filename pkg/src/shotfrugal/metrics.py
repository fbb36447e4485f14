"""Approximation-ratio metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._utils import popcounts
from .exceptions import DegenerateError
from .problems import (DiagonalHamiltonian, MaxCutInstance, SpectrumExtremes,
                       build_hamiltonian, instance_extremes)
from .simulator import probabilities

MAXCUT = "maxcut"
PO = "po"


@dataclass(frozen=True)
class ArContext:
    extremes: SpectrumExtremes
    problem_kind: str
    K: Optional[int] = None

    def __post_init__(self):
        if self.problem_kind not in (MAXCUT, PO):
            raise ValueError(f"unknown problem kind {self.problem_kind!r}")
        if self.problem_kind == PO and (self.K is None or not self.extremes.feasible_only):
            raise ValueError("portfolio AR needs K and feasible-only extremes")
        if self.extremes.f_max == self.extremes.f_min:
            raise DegenerateError("f_max == f_min; approximation ratio undefined")

    @classmethod
    def for_instance(cls, inst, h: DiagonalHamiltonian | None = None) -> "ArContext":
        ext = instance_extremes(inst, h)
        if isinstance(inst, MaxCutInstance):
            return cls(ext, MAXCUT)
        return cls(ext, PO, inst.K)


def ar_of_energy(f, ctx: ArContext):
    """AR of feasible objective values (vectorised over ``f``)."""
    ext = ctx.extremes
    if ctx.problem_kind == MAXCUT:
        ar = (np.asarray(f) - ext.f_min) / (ext.f_max - ext.f_min)
    else:
        ar = (np.asarray(f) - ext.f_max) / (ext.f_min - ext.f_max)
    # round-off can leave the endpoints a few ulps outside [0, 1]
    return np.clip(ar, 0.0, 1.0)


def ar_vector(h: DiagonalHamiltonian, ctx: ArContext) -> np.ndarray:
    """AR of every basis state; infeasible portfolio strings score zero."""
    ar = ar_of_energy(h.energies, ctx)
    if ctx.problem_kind == PO:
        ar = np.where(popcounts(h.n) == ctx.K, ar, 0.0)
    return ar


def approximation_ratio(x: int, h: DiagonalHamiltonian, ctx: ArContext) -> float:
    if not 0 <= int(x) < h.energies.size:
        raise ValueError(f"bitstring index {x} out of range for n={h.n}")
    if ctx.problem_kind == PO and bin(int(x)).count("1") != ctx.K:
        return 0.0
    return float(ar_of_energy(h.energies[int(x)], ctx))


def expected_ar(sv: np.ndarray, h: DiagonalHamiltonian, ctx: ArContext) -> float:
    if sv.size != h.energies.size:
        raise ValueError(f"dimension mismatch: {sv.size} amplitudes vs {h.energies.size} energies")
    return float(probabilities(sv) @ ar_vector(h, ctx))


def sample_mean_ar(samples, h: DiagonalHamiltonian, ctx: ArContext):
    """Mean AR of measured bitstrings and its standard error ``std / sqrt(M)``."""
    samples = np.asarray(samples, dtype=np.int64)
    if samples.size == 0:
        raise ValueError("sample_mean_ar needs at least one sample")
    ar = ar_vector(h, ctx)[samples]
    m = samples.size
    stderr = float(ar.std(ddof=1)) / math.sqrt(m) if m > 1 else 0.0
    return float(ar.mean()), stderr


def relative_ar_improvement(ar_x: float, ar_ini: float, ar_opt: float) -> float:
    """Fraction of the ``ar_ini -> ar_opt`` gap closed by ``ar_x``."""
    gap = ar_opt - ar_ini
    if abs(gap) < 1e-12:
        raise DegenerateError(f"ar_opt - ar_ini = {gap:.3g}; relative improvement undefined")
    return (ar_x - ar_ini) / gap


def context_and_hamiltonian(inst):
    h = build_hamiltonian(inst)
    return ArContext.for_instance(inst, h), h
