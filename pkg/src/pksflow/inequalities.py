"""Executable forms of the entropy-control inequalities used by the analysis.

Each check evaluates both sides of an inequality on a discrete field and
returns (lhs, rhs, holds).  They are theorems for the continuum objects, so
randomized failures indicate implementation bugs; the interpolation
constants L_eps and C_p are empirical calibrations (see pksflow.constants
and pksflow.calibration) because only existence is asserted analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .constants import bhn_l_eps, gns_c_p
from .energy import fisher_information
from .grids import Grid, InvalidArgumentError

_DEFAULT_SLACK = 1e-9


@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    rhs: float
    holds: bool

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.holds))


def carleman_check(field: np.ndarray, grid: Grid, tol: float = _DEFAULT_SLACK) -> InequalityCheck:
    """int rho |ln rho|  <=  int rho ln rho + M_2(rho) + 2 ln(2pi) int rho + 2/e."""
    arr = np.asarray(field, dtype=float)
    area = grid.cell_area
    ent_signed = xlogy(arr, arr)
    lhs = float(np.abs(ent_signed).sum() * area)
    m2 = float(np.sum(grid.radius_sq * arr) * area)
    total = float(arr.sum() * area)
    rhs = float(ent_signed.sum() * area) + m2 + 2.0 * math.log(2.0 * math.pi) * total + 2.0 / math.e
    return InequalityCheck(lhs, rhs, lhs <= rhs + tol)


def bhn_check(field: np.ndarray, grid: Grid, eps: float, tol: float = _DEFAULT_SLACK) -> InequalityCheck:
    """||rho||_2^2 <= eps ||grad rho/rho||^2_{L2(rho)} ||rho ln rho||_1 + L_eps ||rho||_1.

    L_eps is the calibrated constant from pksflow.constants.
    """
    if eps <= 0:
        raise InvalidArgumentError("eps must be positive")
    arr = np.asarray(field, dtype=float)
    area = grid.cell_area
    lhs = float(np.sum(arr**2) * area)
    fisher = fisher_information(grid, arr)
    ent_l1 = float(np.abs(xlogy(arr, arr)).sum() * area)
    mass = float(arr.sum() * area)
    rhs = eps * fisher * ent_l1 + bhn_l_eps(eps) * mass
    return InequalityCheck(lhs, rhs, lhs <= rhs + tol)


def gns_check(field: np.ndarray, grid: Grid, p: float, tol: float = _DEFAULT_SLACK) -> InequalityCheck:
    """||f||_p <= C_p ||f||_1^{1/p} (int |grad f|^2 / f)^{1 - 1/p}.

    C_p is the calibrated constant; C_1 = 1 makes p = 1 an identity.
    """
    if p < 1:
        raise InvalidArgumentError("p must be at least 1")
    arr = np.asarray(field, dtype=float)
    area = grid.cell_area
    lhs = float(np.sum(arr**p) * area) ** (1.0 / p)
    l1 = float(arr.sum() * area)
    fisher = fisher_information(grid, arr)
    rhs = gns_c_p(p) * l1 ** (1.0 / p) * fisher ** (1.0 - 1.0 / p)
    return InequalityCheck(lhs, rhs, lhs <= rhs + tol)
