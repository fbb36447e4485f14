"""Precomputed energy landscapes used as a cheap, shot-noised objective.

A grid stores the exact energy mean and standard deviation at every node
of a box in parameter space. Queries between nodes are answered by
multilinear interpolation, and a finite-shot estimate is emulated by
adding Gaussian noise with variance ``std**2 / shots``.

Node ordering is row-major with the parameter vector layout
``(gamma_1..gamma_p, beta_1..beta_p)``; for ``p=1`` dimension 0 is gamma
and dimension 1 is beta.
"""
from __future__ import annotations

import csv
import hashlib
import itertools
import math
import zipfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import CapacityError, GridSchemaError
from .problems import build_hamiltonian
from .simulator import QaoaParams, default_mixer, energy_std, expectation_energy, run_qaoa

SCHEMA_VERSION = 1
DEFAULT_RESOLUTION = 128
DEFAULT_WIDTH = math.pi / 4
CELL_CAP = 10 ** 7
_FIELDS = ("schema_version", "dims", "bounds", "resolution", "center", "mean", "std")


@dataclass(frozen=True, eq=False)
class LandscapeGrid:
    dims: int
    bounds: np.ndarray  # (dims, 2): lo, hi per dimension
    resolution: int
    mean: np.ndarray  # flat, resolution**dims
    std: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        bounds = np.array(self.bounds, dtype=float).reshape(self.dims, 2)
        mean = np.array(self.mean, dtype=float).reshape(-1)
        std = np.array(self.std, dtype=float).reshape(-1)
        center = np.array(self.center, dtype=float).reshape(-1)
        if self.resolution < 2:
            raise ValueError("resolution must be at least 2")
        if np.any(bounds[:, 0] >= bounds[:, 1]):
            raise ValueError("every bound needs lo < hi")
        size = self.resolution ** self.dims
        if mean.size != size or std.size != size:
            raise ValueError(f"grid arrays must hold resolution**dims = {size} values")
        if center.size != self.dims:
            raise ValueError("center must have one entry per dimension")
        if np.any(std < 0):
            raise ValueError("std landscape must be non-negative")
        for arr in (bounds, mean, std, center):
            arr.setflags(write=False)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "center", center)

    def axis(self, k: int) -> np.ndarray:
        lo, hi = self.bounds[k]
        return np.linspace(lo, hi, self.resolution)

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape ``(resolution**dims, dims)``, row-major."""
        axes = [self.axis(k) for k in range(self.dims)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    @property
    def shape(self):
        return (self.resolution,) * self.dims

    def checksum(self) -> str:
        h = hashlib.sha256()
        for arr in (self.bounds, self.center, self.mean, self.std):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, LandscapeGrid):
            return NotImplemented
        return (self.dims == other.dims and self.resolution == other.resolution
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("bounds", "center", "mean", "std")))

    __hash__ = None


def centered_bounds(center, width: float = DEFAULT_WIDTH) -> np.ndarray:
    center = np.asarray(center, dtype=float).reshape(-1)
    return np.stack([center - width / 2, center + width / 2], axis=1)


def _node_block(inst, p, mixer, axes, start, stop):
    """Mean and std at flat node indices ``start..stop-1`` (row-major)."""
    h = build_hamiltonian(inst)
    nodes = itertools.islice(itertools.product(*axes), start, stop)
    mean = np.empty(stop - start)
    std = np.empty(stop - start)
    for k, node in enumerate(nodes):
        vec = np.array(node)
        sv = run_qaoa(inst, QaoaParams(vec[:p], vec[p:]), mixer, h=h)
        mean[k] = expectation_energy(sv, h)
        std[k] = energy_std(sv, h)
    return mean, std


def compute_landscape(inst, p: int, mixer=None, bounds=None, resolution: int = DEFAULT_RESOLUTION,
                      center=None, cell_cap: int = CELL_CAP, workers: int = 1) -> LandscapeGrid:
    """Exact mean and std of the energy at every grid node.

    Either ``bounds`` (shape ``(2p, 2)``) or ``center`` (box of width pi/4
    around it) must be given. With ``workers > 1`` contiguous node blocks
    run in separate processes; assembly order is fixed, so the result does
    not depend on the worker count.
    """
    dims = 2 * p
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    if resolution ** dims > cell_cap:
        raise CapacityError(f"{resolution}**{dims} grid nodes exceed the cap of {cell_cap}")
    if bounds is None:
        if center is None:
            raise ValueError("compute_landscape needs bounds or a center")
        bounds = centered_bounds(center)
    bounds = np.asarray(bounds, dtype=float).reshape(dims, 2)
    if center is None:
        center = bounds.mean(axis=1)
    mixer = default_mixer(inst) if mixer is None else mixer
    axes = [np.linspace(lo, hi, resolution) for lo, hi in bounds]
    total = resolution ** dims
    if workers <= 1:
        mean, std = _node_block(inst, p, mixer, axes, 0, total)
    else:
        edges = np.linspace(0, total, 4 * workers + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_node_block, *zip(*[(inst, p, mixer, axes, a, b)
                                                       for a, b in zip(edges[:-1], edges[1:])])))
        mean = np.concatenate([m for m, _ in parts])
        std = np.concatenate([s for _, s in parts])
    return LandscapeGrid(dims, bounds, resolution, mean, std, center)


def _cell(grid: LandscapeGrid, point):
    """Lower-corner indices and fractional offsets; clamps out-of-box points."""
    point = np.asarray(point, dtype=float).reshape(-1)
    if point.size != grid.dims:
        raise ValueError(f"point has {point.size} coordinates, grid has {grid.dims} dimensions")
    lo, hi = grid.bounds[:, 0], grid.bounds[:, 1]
    clamped = bool(np.any(point < lo) or np.any(point > hi))
    point = np.clip(point, lo, hi)
    r = grid.resolution
    idx = np.empty(grid.dims, dtype=np.int64)
    frac = np.empty(grid.dims)
    for k in range(grid.dims):
        ax = grid.axis(k)
        i = int(np.clip(np.searchsorted(ax, point[k], side="right") - 1, 0, r - 2))
        idx[k] = i
        frac[k] = (point[k] - ax[i]) / (ax[i + 1] - ax[i])
    return idx, frac, clamped


def interpolate(grid: LandscapeGrid, point, return_clamped: bool = False):
    """Multilinear interpolation of the mean and std landscapes at ``point``."""
    idx, frac, clamped = _cell(grid, point)
    r = grid.resolution
    strides = r ** np.arange(grid.dims - 1, -1, -1)
    mean = 0.0
    std = 0.0
    for corner in itertools.product((0, 1), repeat=grid.dims):
        c = np.array(corner)
        w = float(np.prod(np.where(c == 1, frac, 1.0 - frac)))
        if w == 0.0:
            continue
        flat = int(((idx + c) * strides).sum())
        mean += w * grid.mean[flat]
        std += w * grid.std[flat]
    if return_clamped:
        return mean, std, clamped
    return mean, std


def sampled_eval(grid: LandscapeGrid, point, shots: int, seed, size=None):
    """Shot-noised energy: ``mean + z * std / sqrt(shots)`` with ``z ~ N(0, 1)``.

    ``size`` returns that many independent draws from the one seeded
    stream instead of a scalar; the first of them equals the scalar draw.
    """
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    mean, std = interpolate(grid, point)
    if std == 0.0:
        return mean if size is None else np.full(size, mean)
    z = np.random.default_rng(seed).standard_normal(size)
    return mean + z * std / math.sqrt(shots)


class LandscapeOracle:
    """Objective oracle answering from a grid instead of a simulator.

    ``to_params`` maps the optimizer's coordinates to the grid's parameter
    vector and ``sign`` flips the energy for maximisation problems.
    Out-of-box queries are clamped and counted in ``clamp_events``.
    """

    def __init__(self, grid: LandscapeGrid, sign: float = 1.0,
                 to_params: Optional[Callable[[np.ndarray], np.ndarray]] = None):
        self.grid = grid
        self.sign = float(sign)
        self.to_params = to_params
        self.dimension = grid.dims
        self.clamp_events = 0

    def evaluate(self, point, shots, seed):
        vec = np.asarray(point, dtype=float) if self.to_params is None else self.to_params(point)
        _, _, clamped = _cell(self.grid, vec)
        self.clamp_events += int(clamped)
        return self.sign * sampled_eval(self.grid, vec, shots, seed)


# -- persistence ----------------------------------------------------------------

def export_grid(grid: LandscapeGrid, path) -> None:
    with open(path, "wb") as fh:
        np.savez(fh, schema_version=np.array(SCHEMA_VERSION), dims=np.array(grid.dims),
                 bounds=grid.bounds, resolution=np.array(grid.resolution), center=grid.center,
                 mean=grid.mean, std=grid.std)


def import_grid(path) -> LandscapeGrid:
    try:
        with np.load(path, allow_pickle=False) as data:
            missing = [f for f in _FIELDS if f not in data.files]
            if missing:
                raise GridSchemaError(f"{path}: grid file lacks fields {missing}")
            version = int(data["schema_version"])
            if version != SCHEMA_VERSION:
                raise GridSchemaError(f"{path}: schema version {version}, expected {SCHEMA_VERSION}")
            payload = {f: np.array(data[f]) for f in _FIELDS[1:]}
    except GridSchemaError:
        raise
    except (OSError, ValueError, EOFError, zipfile.BadZipFile, KeyError) as exc:
        raise GridSchemaError(f"{path}: unreadable grid file ({exc})") from exc
    try:
        return LandscapeGrid(int(payload["dims"]), payload["bounds"], int(payload["resolution"]),
                             payload["mean"], payload["std"], payload["center"])
    except ValueError as exc:
        raise GridSchemaError(f"{path}: inconsistent grid payload ({exc})") from exc


def coordinate_names(dims: int):
    if dims == 2:
        return ["gamma", "beta"]
    p = dims // 2
    return [f"gamma_{i + 1}" for i in range(p)] + [f"beta_{i + 1}" for i in range(p)]


def export_grid_csv(grid: LandscapeGrid, path) -> int:
    """Plot-ready rows ``(coordinates..., mean, std)``; returns the row count."""
    nodes = grid.nodes()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(coordinate_names(grid.dims) + ["mean", "std"])
        for coords, m, s in zip(nodes, grid.mean, grid.std):
            writer.writerow([repr(float(c)) for c in coords] + [repr(float(m)), repr(float(s))])
    return len(nodes)
