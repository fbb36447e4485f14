"""Dense statevector simulation of QAOA circuits.

States are plain complex128 numpy arrays of length ``2**n``; every
operation returns a new array and leaves its input untouched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

from ._utils import popcounts
from .problems import (MAX_QUBITS, DiagonalHamiltonian, MaxCutInstance,
                       PortfolioInstance, build_hamiltonian)
from .exceptions import CapacityError


@dataclass(frozen=True)
class QaoaParams:
    gamma: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float).reshape(-1)
        b = np.array(self.beta, dtype=float).reshape(-1)
        if g.size == 0 or g.size != b.size:
            raise ValueError(f"gamma and beta need equal nonzero length, got {g.size} and {b.size}")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(b))):
            raise ValueError("QAOA parameters must be finite")
        g.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "beta", b)

    @property
    def p(self) -> int:
        return self.gamma.size

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.gamma, self.beta])

    @classmethod
    def from_vector(cls, vec) -> "QaoaParams":
        vec = np.asarray(vec, dtype=float)
        if vec.size % 2:
            raise ValueError("parameter vector must have even length 2p")
        p = vec.size // 2
        return cls(vec[:p], vec[p:])

    def __eq__(self, other):
        if not isinstance(other, QaoaParams):
            return NotImplemented
        return np.array_equal(self.gamma, other.gamma) and np.array_equal(self.beta, other.beta)

    __hash__ = None


@dataclass(frozen=True)
class TransverseX:
    pass


@dataclass(frozen=True)
class XYRing:
    trotter_reps: int = 1

    def __post_init__(self):
        if int(self.trotter_reps) < 1:
            raise ValueError(f"trotter_reps must be >= 1, got {self.trotter_reps}")


MixerKind = Union[TransverseX, XYRing]


def default_mixer(inst) -> MixerKind:
    return XYRing() if isinstance(inst, PortfolioInstance) else TransverseX()


def num_qubits(sv: np.ndarray) -> int:
    n = int(sv.size).bit_length() - 1
    if sv.ndim != 1 or (1 << n) != sv.size:
        raise ValueError(f"state of length {sv.size} is not a power of two")
    return n


def _check_n(n, max_qubits=MAX_QUBITS):
    if not 1 <= n <= max_qubits:
        raise CapacityError(f"n={n} outside the supported range [1, {max_qubits}]")


def _check_match(sv, h):
    if sv.size != h.energies.size:
        raise ValueError(f"dimension mismatch: state has {sv.size} amplitudes, "
                         f"Hamiltonian has {h.energies.size} energies")


def prepare_plus_state(n: int, max_qubits: int = MAX_QUBITS) -> np.ndarray:
    _check_n(n, max_qubits)
    return np.full(1 << n, 2.0 ** (-n / 2), dtype=complex)


def prepare_dicke_state(n: int, K: int, max_qubits: int = MAX_QUBITS) -> np.ndarray:
    """Uniform superposition over all weight-``K`` bitstrings."""
    _check_n(n, max_qubits)
    if not 1 <= K <= n - 1:
        raise ValueError(f"Dicke state needs 1 <= K <= n-1, got K={K}, n={n}")
    sv = np.zeros(1 << n, dtype=complex)
    sv[popcounts(n) == K] = 1.0 / math.sqrt(math.comb(n, K))
    return sv


def basis_state(n: int, x: int) -> np.ndarray:
    sv = np.zeros(1 << n, dtype=complex)
    sv[x] = 1.0
    return sv


def apply_phase_separator(sv: np.ndarray, h: DiagonalHamiltonian, gamma: float) -> np.ndarray:
    _check_match(sv, h)
    return sv * np.exp(-1j * gamma * h.energies)


def apply_x_mixer(sv: np.ndarray, beta: float) -> np.ndarray:
    """``exp(-i beta sum_i X_i)``, one single-qubit rotation per qubit."""
    n = num_qubits(sv)
    c, s = math.cos(beta), -1j * math.sin(beta)
    out = np.array(sv, dtype=complex)
    for i in range(n):
        view = out.reshape(-1, 2, 1 << i)
        a0 = view[:, 0, :].copy()
        a1 = view[:, 1, :]
        view[:, 0, :] = c * a0 + s * a1
        view[:, 1, :] = s * a0 + c * a1
    return out


def ring_pairs(n: int):
    """Nearest-neighbour pairs of a ring; a two-site ring has a single bond."""
    if n < 2:
        raise ValueError("the XY ring mixer needs n >= 2")
    if n == 2:
        return [(0, 1)]
    return [(i, (i + 1) % n) for i in range(n)]


@lru_cache(maxsize=256)
def _swap_indices(n: int, i: int, j: int):
    idx = np.arange(1 << n, dtype=np.int64)
    bi, bj = (idx >> i) & 1, (idx >> j) & 1
    lo = idx[(bi == 0) & (bj == 1)]
    hi = lo ^ ((1 << i) | (1 << j))
    lo.setflags(write=False)
    hi.setflags(write=False)
    return lo, hi


def apply_xy_pair(sv: np.ndarray, i: int, j: int, angle: float) -> np.ndarray:
    """``exp(-i angle (X_i X_j + Y_i Y_j))``: rotates within span{|01>, |10>}."""
    n = num_qubits(sv)
    lo, hi = _swap_indices(n, i, j)
    c, s = math.cos(2.0 * angle), -1j * math.sin(2.0 * angle)
    out = np.array(sv, dtype=complex)
    a, b = sv[lo], sv[hi]
    out[lo] = c * a + s * b
    out[hi] = s * a + c * b
    return out


def apply_xy_ring_mixer(sv: np.ndarray, beta: float, trotter_reps: int = 1) -> np.ndarray:
    """First-order Trotterised ``exp(-i beta sum_<ij> (XX + YY))`` over the ring."""
    if trotter_reps < 1:
        raise ValueError(f"trotter_reps must be >= 1, got {trotter_reps}")
    n = num_qubits(sv)
    step = beta / trotter_reps
    out = sv
    pairs = ring_pairs(n)
    for _ in range(trotter_reps):
        for i, j in pairs:
            out = apply_xy_pair(out, i, j, step)
    return out


def initial_state(inst, mixer: MixerKind) -> np.ndarray:
    if isinstance(mixer, XYRing):
        if not isinstance(inst, PortfolioInstance):
            raise ValueError("the XY ring mixer is paired with portfolio instances")
        return prepare_dicke_state(inst.n, inst.K)
    if not isinstance(inst, MaxCutInstance):
        raise ValueError("the transverse-field mixer is paired with MaxCut instances")
    return prepare_plus_state(inst.n)


def apply_mixer(sv, beta, mixer: MixerKind):
    if isinstance(mixer, XYRing):
        return apply_xy_ring_mixer(sv, beta, mixer.trotter_reps)
    return apply_x_mixer(sv, beta)


def run_qaoa(inst, params: QaoaParams, mixer: MixerKind | None = None,
             h: DiagonalHamiltonian | None = None) -> np.ndarray:
    """Final QAOA state for ``inst`` at ``params``.

    ``h`` may be passed to reuse an already-built Hamiltonian.
    """
    mixer = default_mixer(inst) if mixer is None else mixer
    h = build_hamiltonian(inst) if h is None else h
    sv = initial_state(inst, mixer)
    for gamma, beta in zip(params.gamma, params.beta):
        sv = apply_phase_separator(sv, h, gamma)
        sv = apply_mixer(sv, beta, mixer)
    return sv


def probabilities(sv: np.ndarray) -> np.ndarray:
    return sv.real ** 2 + sv.imag ** 2


def expectation_energy(sv: np.ndarray, h: DiagonalHamiltonian) -> float:
    _check_match(sv, h)
    return float(probabilities(sv) @ h.energies)


def energy_std(sv: np.ndarray, h: DiagonalHamiltonian) -> float:
    _check_match(sv, h)
    prob = probabilities(sv)
    mean = prob @ h.energies
    second = prob @ (h.energies ** 2)
    return math.sqrt(max(0.0, float(second - mean * mean)))


def sample_bitstrings(sv: np.ndarray, shots: int, seed) -> np.ndarray:
    """I.i.d. measurement outcomes (basis indices) by inverse-CDF lookup."""
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    cdf = np.cumsum(probabilities(sv))
    u = np.random.default_rng(seed).random(shots) * cdf[-1]
    out = np.searchsorted(cdf, u, side="right")
    return np.minimum(out, sv.size - 1)
