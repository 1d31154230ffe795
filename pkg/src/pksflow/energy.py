"""Newtonian potentials, entropy, free energy, and its dissipation.

The chemoattractant potential of a density rho is the 2D Newtonian
potential

    u(x) = -(1/2pi) sum_y K(x - y) rho(y) h^2,

where K is the cell-averaged logarithmic kernel: K(0) is the exact mean of
ln|x| over one h x h cell and K(d) = ln|d| for distinct cell centers.  The
free energy splits as F = H + W with

    H(rho) = sum_i int rho_i ln rho_i,
    W(rho) = sum_ij (a_ij / 4pi) int int rho_i(x) ln|x-y| rho_j(y) dx dy
           = -(1/2) sum_ij a_ij int u_j rho_i,

and the dissipation is the rho-weighted squared flux velocity

    D_F(rho) = sum_i int |grad rho_i / rho_i - sum_j a_ij grad u_j|^2 rho_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import xlogy

from .constants import LOG_KERNEL_CELL_MEAN
from .criticality import InteractionMatrix
from .grids import Grid, InvalidArgumentError, MultiDensity

# Floor applied to rho in the grad(rho)/rho quotient only; the dissipation
# integrand is rho-weighted, so floored cells contribute negligibly.  This
# is the single place the vacuum is regularized.
DISSIPATION_FLOOR_REL = 1e-12


@dataclass(frozen=True)
class PotentialField:
    """Newtonian potential of one species on a grid."""

    grid: Grid
    values: np.ndarray
    species: int = 0

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("potential contains non-finite values")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class EnergyReport:
    entropy: float
    interaction: float
    free_energy: float
    per_species_entropy: tuple[float, ...]
    dissipation: float | None = None

    def __post_init__(self) -> None:
        if self.free_energy != self.entropy + self.interaction:
            raise InvalidArgumentError("free_energy must equal entropy + interaction as stored")


def _log_kernel(grid: Grid) -> np.ndarray:
    """Cell-averaged log kernel sampled on all (2N-1)^2 center offsets."""
    n = grid.cells_per_side
    h = grid.spacing
    d = np.arange(-(n - 1), n) * h
    dist = np.hypot(d[:, None], d[None, :])
    with np.errstate(divide="ignore"):
        kern = np.log(dist)
    kern[n - 1, n - 1] = math.log(h) + LOG_KERNEL_CELL_MEAN
    return kern


_KERNEL_CACHE: dict[tuple[int, float], np.ndarray] = {}


def _cached_log_kernel(grid: Grid) -> np.ndarray:
    key = (grid.cells_per_side, grid.half_extent)
    kern = _KERNEL_CACHE.get(key)
    if kern is None:
        kern = _log_kernel(grid)
        if len(_KERNEL_CACHE) > 8:
            _KERNEL_CACHE.clear()
        _KERNEL_CACHE[key] = kern
    return kern


def newtonian_potential(field: np.ndarray, grid: Grid, species: int = 0) -> PotentialField:
    """Free-space Newtonian potential of a nonnegative density field.

    Computed as a zero-padded linear convolution (FFT size >= 2N per axis),
    so there is no periodic wrap-around and the far field decays like
    -(beta/2pi) ln|x|.
    """
    arr = np.asarray(field, dtype=float)
    if arr.shape != (grid.cells_per_side,) * 2:
        raise InvalidArgumentError("field shape does not match grid")
    if np.any(arr < 0):
        raise InvalidArgumentError("density must be nonnegative")
    kern = _cached_log_kernel(grid)
    conv = fftconvolve(arr, kern, mode="same")
    u = -(grid.cell_area / (2.0 * math.pi)) * conv
    return PotentialField(grid, u, species)


def potentials(rho: MultiDensity) -> list[PotentialField]:
    return [newtonian_potential(rho.values[i], rho.grid, i) for i in range(rho.n_species)]


def entropy(rho: MultiDensity) -> float:
    """H(rho) = sum_i int rho_i ln rho_i with the convention 0 ln 0 = 0."""
    return float(xlogy(rho.values, rho.values).sum() * rho.grid.cell_area)


def per_species_entropy(rho: MultiDensity) -> tuple[float, ...]:
    area = rho.grid.cell_area
    return tuple(float(xlogy(v, v).sum() * area) for v in rho.values)


def positive_entropy(rho: MultiDensity) -> float:
    """H_+(rho) = sum_i int rho_i (ln rho_i)_+, the positive entropy part."""
    vals = rho.values
    terms = xlogy(vals, vals)
    return float(np.where(terms > 0, terms, 0.0).sum() * rho.grid.cell_area)


def absolute_entropy(rho: MultiDensity) -> float:
    """sum_i int rho_i |ln rho_i|."""
    return float(np.abs(xlogy(rho.values, rho.values)).sum() * rho.grid.cell_area)


def interaction_energy(
    rho: MultiDensity,
    a: InteractionMatrix,
    pots: list[PotentialField] | None = None,
) -> float:
    """W(rho) = -(1/2) sum_ij a_ij int u_j rho_i h^2.

    Consistent with the quadratic form (a_ij/4pi) int int rho_i ln|x-y| rho_j
    because u_j = -(1/2pi) ln * rho_j.
    """
    if a.n != rho.n_species:
        raise InvalidArgumentError("interaction matrix size does not match density")
    if not np.any(a.a):
        return 0.0
    if pots is None:
        pots = potentials(rho)
    area = rho.grid.cell_area
    total = 0.0
    for i in range(rho.n_species):
        for j in range(rho.n_species):
            aij = a.a[i, j]
            if aij != 0.0:
                total += aij * float(np.sum(pots[j].values * rho.values[i])) * area
    return -0.5 * total


def free_energy(
    rho: MultiDensity,
    a: InteractionMatrix,
    pots: list[PotentialField] | None = None,
) -> EnergyReport:
    """F = H + W, reported without the dissipation term."""
    per = per_species_entropy(rho)
    h = float(sum(per))
    w = interaction_energy(rho, a, pots)
    return EnergyReport(entropy=h, interaction=w, free_energy=h + w, per_species_entropy=per)


def _gradient(field: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    # centered second-order differences inside, first-order one-sided rows
    # at the boundary (np.gradient edge_order=1)
    gx, gy = np.gradient(field, h, edge_order=1)
    return gx, gy


def flux_velocity(
    rho_i: np.ndarray,
    drift_grad: tuple[np.ndarray, np.ndarray],
    grid: Grid,
) -> tuple[np.ndarray, np.ndarray]:
    """v = grad(rho)/max(rho, floor) - drift_grad for one species."""
    floor = DISSIPATION_FLOOR_REL * max(float(rho_i.max()), 1e-300)
    denom = np.maximum(rho_i, floor)
    gx, gy = _gradient(rho_i, grid.spacing)
    return gx / denom - drift_grad[0], gy / denom - drift_grad[1]


def dissipation(
    rho: MultiDensity,
    a: InteractionMatrix,
    pots: list[PotentialField] | None = None,
) -> float:
    """D_F(rho): total over species of the per-species dissipation."""
    return float(sum(dissipation_per_species(rho, a, pots)))


def dissipation_per_species(
    rho: MultiDensity,
    a: InteractionMatrix,
    pots: list[PotentialField] | None = None,
) -> tuple[float, ...]:
    if a.n != rho.n_species:
        raise InvalidArgumentError("interaction matrix size does not match density")
    if pots is None and np.any(a.a):
        pots = potentials(rho)
    grid = rho.grid
    h = grid.spacing
    area = grid.cell_area
    grad_u = None
    if pots is not None:
        grad_u = [_gradient(p.values, h) for p in pots]
    out = []
    for i in range(rho.n_species):
        if grad_u is None:
            drift = (0.0, 0.0)
        else:
            dx = np.zeros_like(rho.values[i])
            dy = np.zeros_like(rho.values[i])
            for j in range(rho.n_species):
                aij = a.a[i, j]
                if aij != 0.0:
                    dx += aij * grad_u[j][0]
                    dy += aij * grad_u[j][1]
            drift = (dx, dy)
        vx, vy = flux_velocity(rho.values[i], drift, grid)
        out.append(float(np.sum((vx**2 + vy**2) * rho.values[i]) * area))
    return tuple(out)


def fisher_information(grid: Grid, field: np.ndarray) -> float:
    """int |grad rho / rho|^2 rho, the a = 0 dissipation of one field."""
    floor = DISSIPATION_FLOOR_REL * max(float(field.max()), 1e-300)
    denom = np.maximum(field, floor)
    gx, gy = _gradient(field, grid.spacing)
    return float(np.sum((gx**2 + gy**2) / denom) * grid.cell_area)
