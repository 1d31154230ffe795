"""One-time calibration of the empirical inequality constants.

The analysis only asserts that constants L_eps and C_p exist; concrete
numbers are required to make the checks executable.  This script maximizes
the needed constant over a standard family of densities -- Gaussians across
scales and masses, uniform boxes, and seeded random smooth fields at N=64
(the same generator the property tests draw from) -- and applies a 2x
safety factor.  Run

    python -m pksflow.calibration

and paste the printed tables into pksflow/constants.py.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import xlogy

from .constants import BHN_SAFETY_FACTOR, GNS_SAFETY_FACTOR
from .energy import fisher_information
from .grids import Grid, make_gaussian, make_uniform, random_smooth_field

BHN_EPS_GRID = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)
GNS_P_GRID = (1.5, 2.0, 2.5, 3.0, 4.0, 6.0)
N_RANDOM = 200
RANDOM_SEED = 20240817


def calibration_family() -> list[tuple[Grid, np.ndarray]]:
    fields: list[tuple[Grid, np.ndarray]] = []
    grid = Grid(8.0, 64)
    for sigma in (0.25, 0.5, 1.0, 2.0, 4.0):
        for m in (0.5, 1.0, 4.0, 8.0 * math.pi):
            fields.append((grid, make_gaussian(grid, sigma=sigma, mass=m)))
    for half in (1.0, 4.0, 8.0):
        g = Grid(half, 64)
        for m in (0.5, 1.0, 4.0, 8.0 * math.pi):
            fields.append((g, make_uniform(g, m)))
    rng = np.random.default_rng(RANDOM_SEED)
    for _ in range(N_RANDOM):
        fields.append((grid, random_smooth_field(grid, rng)))
    return fields


def _stats(grid: Grid, f: np.ndarray) -> tuple[float, float, float, float]:
    area = grid.cell_area
    l2sq = float(np.sum(f**2) * area)
    fisher = fisher_information(grid, f)
    ent_l1 = float(np.abs(xlogy(f, f)).sum() * area)
    l1 = float(f.sum() * area)
    return l2sq, fisher, ent_l1, l1


def calibrate_bhn(family) -> dict[float, float]:
    stats = [_stats(g, f) for g, f in family]
    table = {}
    for eps in BHN_EPS_GRID:
        needed = 0.0
        for l2sq, fisher, ent_l1, l1 in stats:
            needed = max(needed, (l2sq - eps * fisher * ent_l1) / l1)
        table[eps] = BHN_SAFETY_FACTOR * needed
    return table


def calibrate_gns(family) -> dict[float, float]:
    stats = [_stats(g, f) for g, f in family]
    table = {1.0: 1.0}
    for p in GNS_P_GRID:
        needed = 0.0
        for g_f, (l2sq, fisher, ent_l1, l1) in zip(family, stats):
            g, f = g_f
            lhs = float(np.sum(f**p) * g.cell_area) ** (1.0 / p)
            denom = l1 ** (1.0 / p) * fisher ** (1.0 - 1.0 / p)
            if denom > 0:
                needed = max(needed, lhs / denom)
        table[p] = GNS_SAFETY_FACTOR * needed
    return table


def main() -> None:
    family = calibration_family()
    print(f"# calibration family: {len(family)} densities "
          f"(seed {RANDOM_SEED}, {N_RANDOM} random smooth fields)")
    bhn = calibrate_bhn(family)
    print("BHN_L_EPS_TABLE = {")
    for eps, val in bhn.items():
        print(f"    {eps}: {val!r},")
    print("}")
    gns = calibrate_gns(family)
    print("GNS_C_P_TABLE = {")
    for p, val in gns.items():
        print(f"    {p}: {val!r},")
    print("}")


if __name__ == "__main__":
    main()
