"""Problem instances (weighted MaxCut, portfolio optimisation) and their
diagonal Hamiltonians.

Bit order is little-endian throughout the package: bit ``i`` of a basis
index ``x`` is vertex / asset / qubit ``i``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ._utils import popcounts
from .exceptions import CapacityError, CSVParseError, DegenerateError

MAX_QUBITS = 24

# (weight, mean, variance) of the edge-weight mixture
WEIGHT_MIXTURE = ((0.5, 0.0, 1.0), (0.3, 5.0, 2.0), (0.2, 10.0, 1.0))


@dataclass(frozen=True)
class MaxCutInstance:
    n: int
    edges: tuple  # ((u, v, w), ...) with u < v

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"MaxCut needs n >= 2, got {self.n}")
        seen = set()
        norm = []
        for e in self.edges:
            u, v, w = int(e[0]), int(e[1]), float(e[2])
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"edge ({u}, {v}) out of range for n={self.n}")
            if u == v:
                raise ValueError(f"self-loop on vertex {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            if not math.isfinite(w):
                raise ValueError(f"non-finite weight on edge {key}")
            seen.add(key)
            norm.append((key[0], key[1], w))
        object.__setattr__(self, "edges", tuple(norm))

    @property
    def kind(self) -> str:
        return "maxcut"

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, _, w in self.edges], dtype=float)


@dataclass(frozen=True, eq=False)
class PortfolioInstance:
    n: int
    mu: np.ndarray
    sigma: np.ndarray
    q: float
    K: int

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        sigma = np.asarray(self.sigma, dtype=float)
        if self.n < 2:
            raise ValueError(f"portfolio needs n >= 2, got {self.n}")
        if mu.shape != (self.n,):
            raise ValueError(f"mu has shape {mu.shape}, expected ({self.n},)")
        if sigma.shape != (self.n, self.n):
            raise ValueError(f"sigma has shape {sigma.shape}, expected ({self.n}, {self.n})")
        if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(sigma)):
            raise ValueError("mu and sigma must be finite")
        if np.max(np.abs(sigma - sigma.T), initial=0.0) > 1e-12:
            raise ValueError("sigma is not symmetric")
        if not 1 <= int(self.K) <= self.n - 1:
            raise ValueError(f"K must lie in [1, n-1], got K={self.K}, n={self.n}")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "q", float(self.q))
        object.__setattr__(self, "K", int(self.K))

    @property
    def kind(self) -> str:
        return "po"

    def __eq__(self, other):
        if not isinstance(other, PortfolioInstance):
            return NotImplemented
        return (self.n == other.n and self.q == other.q and self.K == other.K
                and np.array_equal(self.mu, other.mu)
                and np.array_equal(self.sigma, other.sigma))

    __hash__ = None


ProblemInstance = Union[MaxCutInstance, PortfolioInstance]


@dataclass(frozen=True, eq=False)
class DiagonalHamiltonian:
    """``energies[x]`` is the classical objective of bitstring ``x``.

    ``offset`` records the constant term of the Ising expansion; it is
    already included in ``energies``.
    """

    n: int
    energies: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        if e.shape != (1 << self.n,):
            raise ValueError(f"energies has length {e.size}, expected 2**{self.n}")
        if not np.all(np.isfinite(e)):
            raise ValueError("energies must be finite")
        e.setflags(write=False)
        object.__setattr__(self, "energies", e)


@dataclass(frozen=True)
class SpectrumExtremes:
    f_min: float
    f_max: float
    argmin: int
    argmax: int
    feasible_only: bool = False
    K: Optional[int] = None


def _check_capacity(n, max_qubits):
    if n > max_qubits:
        raise CapacityError(f"n={n} exceeds the configured maximum of {max_qubits} qubits")


def build_maxcut_hamiltonian(inst: MaxCutInstance, max_qubits: int = MAX_QUBITS) -> DiagonalHamiltonian:
    _check_capacity(inst.n, max_qubits)
    idx = np.arange(1 << inst.n, dtype=np.int64)
    energies = np.zeros(1 << inst.n)
    for u, v, w in inst.edges:
        cut = ((idx >> u) ^ (idx >> v)) & 1
        energies += w * cut
    return DiagonalHamiltonian(inst.n, energies, offset=0.5 * float(inst.weights.sum()))


def build_po_hamiltonian(inst: PortfolioInstance, max_qubits: int = MAX_QUBITS) -> DiagonalHamiltonian:
    _check_capacity(inst.n, max_qubits)
    n, q = inst.n, inst.q
    idx = np.arange(1 << n, dtype=np.int64)
    bits = [((idx >> i) & 1).astype(bool) for i in range(n)]
    energies = np.zeros(1 << n)
    for i in range(n):
        energies += (q * inst.sigma[i, i] - inst.mu[i]) * bits[i]
        for j in range(i + 1, n):
            energies += (2.0 * q * inst.sigma[i, j]) * (bits[i] & bits[j])
    _, _, const = ising_coefficients(inst)
    return DiagonalHamiltonian(n, energies, offset=const)


def build_hamiltonian(inst: ProblemInstance, max_qubits: int = MAX_QUBITS) -> DiagonalHamiltonian:
    if isinstance(inst, MaxCutInstance):
        return build_maxcut_hamiltonian(inst, max_qubits)
    return build_po_hamiltonian(inst, max_qubits)


def ising_coefficients(inst: ProblemInstance):
    """Spin-form coefficients ``(quadratic, linear, constant)`` of the objective.

    With ``x_i = (1 - z_i) / 2`` the objective equals
    ``sum J_ij z_i z_j + sum h_i z_i + constant``. ``quadratic`` maps
    ``(i, j)`` with ``i < j`` to ``J_ij``; ``linear`` maps ``i`` to ``h_i``.
    """
    if isinstance(inst, MaxCutInstance):
        quadratic = {(u, v): -0.5 * w for u, v, w in inst.edges}
        return quadratic, {}, 0.5 * float(inst.weights.sum())
    n, q, sigma, mu = inst.n, inst.q, inst.sigma, inst.mu
    quadratic = {(i, j): 0.5 * q * sigma[i, j] for i in range(n) for j in range(i + 1, n)}
    linear = {i: -0.5 * (q * sigma[i].sum() - mu[i]) for i in range(n)}
    const = 0.5 * sum(q * sigma[i, i:].sum() - mu[i] for i in range(n))
    return quadratic, linear, float(const)


def rescale_divisor(inst: ProblemInstance) -> float:
    """Root of the summed mean-squares of quadratic and linear coefficients.

    MaxCut uses the edge weights as its quadratic coefficients. Portfolio
    instances use the Z/ZZ coefficients of the spin Hamiltonian. A group
    with no nonzero terms contributes nothing.
    """
    if isinstance(inst, MaxCutInstance):
        quad = inst.weights
        lin = np.zeros(0)
    else:
        quadratic, linear, _ = ising_coefficients(inst)
        quad = np.array([c for c in quadratic.values() if c != 0.0])
        lin = np.array([c for c in linear.values() if c != 0.0])
    total = 0.0
    if quad.size:
        total += float(np.mean(quad ** 2))
    if lin.size:
        total += float(np.mean(lin ** 2))
    return math.sqrt(total)


def rescale_instance(inst: ProblemInstance):
    """Divide every objective coefficient by :func:`rescale_divisor`.

    Returns ``(rescaled_instance, divisor)``. A divisor within 1e-12 of one
    is snapped to exactly one and the instance is returned untouched, which
    makes the operation idempotent bit for bit.
    """
    divisor = rescale_divisor(inst)
    if divisor == 0.0:
        raise DegenerateError("all objective coefficients are zero; cannot rescale")
    if abs(divisor - 1.0) <= 1e-12:
        return inst, 1.0
    if isinstance(inst, MaxCutInstance):
        edges = tuple((u, v, w / divisor) for u, v, w in inst.edges)
        return MaxCutInstance(inst.n, edges), divisor
    # every Z/ZZ coefficient and the constant are linear in (mu, sigma) at fixed q
    return PortfolioInstance(inst.n, inst.mu / divisor, inst.sigma / divisor, inst.q, inst.K), divisor


def spectrum_extremes(h: DiagonalHamiltonian, feasible_only: bool = False,
                      K: Optional[int] = None, max_qubits: int = MAX_QUBITS) -> SpectrumExtremes:
    _check_capacity(h.n, max_qubits)
    e = h.energies
    if feasible_only:
        if K is None:
            raise ValueError("feasible_only=True requires K")
        support = np.flatnonzero(popcounts(h.n) == K)
        if support.size == 0:
            raise ValueError(f"no bitstring of weight {K} on {h.n} bits")
        sub = e[support]
        imin, imax = support[np.argmin(sub)], support[np.argmax(sub)]
    else:
        imin, imax = int(np.argmin(e)), int(np.argmax(e))
    return SpectrumExtremes(float(e[imin]), float(e[imax]), int(imin), int(imax),
                            feasible_only=feasible_only, K=K if feasible_only else None)


def instance_extremes(inst: ProblemInstance, h: Optional[DiagonalHamiltonian] = None) -> SpectrumExtremes:
    """Extremes in the convention each family's approximation ratio uses."""
    h = build_hamiltonian(inst) if h is None else h
    if isinstance(inst, PortfolioInstance):
        return spectrum_extremes(h, feasible_only=True, K=inst.K)
    return spectrum_extremes(h)


# -- generators ---------------------------------------------------------------

def random_regular_edges(n: int, degree: int, rng: np.random.Generator, max_tries: int = 10_000):
    """Configuration-model pairing with rejection of loops and multi-edges."""
    if (n * degree) % 2:
        raise ValueError("n * degree must be even")
    if not 0 <= degree < n:
        raise ValueError("degree must satisfy 0 <= degree < n")
    stubs = np.repeat(np.arange(n), degree)
    for _ in range(max_tries):
        rng.shuffle(stubs)
        pairs = stubs.reshape(-1, 2)
        u, v = pairs.min(axis=1), pairs.max(axis=1)
        if np.any(u == v):
            continue
        keys = set(zip(u.tolist(), v.tolist()))
        if len(keys) != len(u):
            continue
        return sorted(keys)
    raise RuntimeError(f"no simple {degree}-regular graph on {n} vertices after {max_tries} tries")


def sample_mixture_weights(size: int, rng: np.random.Generator) -> np.ndarray:
    probs = np.array([c[0] for c in WEIGHT_MIXTURE])
    means = np.array([c[1] for c in WEIGHT_MIXTURE])
    stds = np.sqrt([c[2] for c in WEIGHT_MIXTURE])
    comp = rng.choice(len(probs), size=size, p=probs)
    return rng.normal(means[comp], stds[comp])


def generate_maxcut_instance(n: int, seed: int, weighted: bool = True) -> MaxCutInstance:
    """Random 3-regular graph with Gaussian-mixture edge weights."""
    if n < 4 or n % 2:
        raise ValueError(f"3-regular graphs need an even n >= 4, got {n}")
    rng = np.random.default_rng(seed)
    pairs = random_regular_edges(n, 3, rng)
    weights = sample_mixture_weights(len(pairs), rng) if weighted else np.ones(len(pairs))
    return MaxCutInstance(n, tuple((u, v, float(w)) for (u, v), w in zip(pairs, weights)))


def generate_po_instance(n: int, seed: int, q: float = 0.5, K: Optional[int] = None) -> PortfolioInstance:
    """Synthetic factor-model portfolio: sigma = F F^T + diag(d)."""
    if n < 2:
        raise ValueError(f"portfolio needs n >= 2, got {n}")
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((n, 3))
    d = rng.uniform(0.1, 1.0, size=n)
    sigma = F @ F.T + np.diag(d)
    sigma = 0.5 * (sigma + sigma.T)
    mu = 0.1 * rng.standard_normal(n)
    return PortfolioInstance(n, mu, sigma, q, n // 2 if K is None else K)


def load_po_from_csv(path, n: int, K: int, q: float) -> PortfolioInstance:
    """Portfolio from a returns table: header of asset names, one row per period.

    The first ``n`` columns are used; mean and sample covariance (ddof=1)
    of the returns become ``mu`` and ``sigma``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVParseError(f"{path}: empty file", row=1) from None
        if len(header) < n:
            raise CSVParseError(f"{path}: header lists {len(header)} assets, need {n}", row=1)
        rows = []
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) < n:
                raise CSVParseError(f"{path}: expected at least {n} fields, got {len(record)}",
                                    row=lineno, column=len(record) + 1)
            values = []
            for col, cell in enumerate(record[:n], start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise CSVParseError(f"{path}: cannot parse {cell!r} as a number",
                                        row=lineno, column=col) from None
                if not math.isfinite(v):
                    raise CSVParseError(f"{path}: non-finite value {cell!r}", row=lineno, column=col)
                values.append(v)
            rows.append(values)
    if len(rows) < 2:
        raise DegenerateError(f"{path}: need at least 2 return rows to estimate a covariance, got {len(rows)}")
    R = np.array(rows)
    sigma = np.cov(R, rowvar=False, ddof=1)
    return PortfolioInstance(n, R.mean(axis=0), 0.5 * (sigma + sigma.T), q, K)


# -- JSON ---------------------------------------------------------------------

def instance_to_dict(inst: ProblemInstance) -> dict:
    if isinstance(inst, MaxCutInstance):
        return {"type": "maxcut", "n": inst.n, "edges": [[u, v, w] for u, v, w in inst.edges]}
    return {"type": "po", "n": inst.n, "mu": inst.mu.tolist(), "sigma": inst.sigma.tolist(),
            "q": inst.q, "K": inst.K}


def instance_from_dict(d: dict) -> ProblemInstance:
    kind = d.get("type")
    try:
        if kind == "maxcut":
            return MaxCutInstance(int(d["n"]), tuple(tuple(e) for e in d["edges"]))
        if kind == "po":
            return PortfolioInstance(int(d["n"]), np.array(d["mu"], dtype=float),
                                     np.array(d["sigma"], dtype=float), float(d["q"]), int(d["K"]))
    except KeyError as exc:
        raise ValueError(f"instance of type {kind!r} is missing field {exc.args[0]!r}") from None
    raise ValueError(f"unknown instance type {kind!r}; expected 'maxcut' or 'po'")


def save_instance(inst: ProblemInstance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=1) + "\n")


def load_instance(path) -> ProblemInstance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))
