"""Interaction matrices and the subset mass-criticality algebra.

For masses beta and a symmetric nonnegative sensitivity matrix (a_ij), the
subset polynomial

    Lambda_J(beta) = sum_{i in J} beta_i (8 pi - sum_{j in J} a_ij beta_j)

classifies the mass vector: sub-critical means Lambda_J > 0 for every
nonempty J, and a negative Lambda_J witnesses super-criticality.  The sign
of Lambda over the full index set also gives the predicted second-moment
growth rate Lambda_I / (2 pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from itertools import combinations

import numpy as np

from .grids import InvalidArgumentError

EIGHT_PI = 8.0 * math.pi

# Exhaustive subset enumeration is exponential; applications use small n.
MAX_SPECIES_FOR_CLASSIFY = 20

# |Lambda_J| below this (relative to the 8*pi*sum(beta) scale) counts as an
# exact zero when deciding critical vs sub/super-critical.
_ZERO_REL_TOL = 1e-12


@dataclass(frozen=True)
class InteractionMatrix:
    """Symmetric n x n sensitivity matrix with nonnegative entries."""

    a: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.a, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InvalidArgumentError("interaction matrix must be square")
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("interaction matrix contains non-finite entries")
        scale = max(np.abs(arr).max(), 1.0)
        if np.abs(arr - arr.T).max() > 1e-12 * scale:
            raise InvalidArgumentError("interaction matrix must be symmetric")
        if arr.min() < 0:
            raise InvalidArgumentError("interaction matrix entries must be nonnegative (conflict-free case)")
        arr = 0.5 * (arr + arr.T)  # remove symmetric roundoff
        arr.setflags(write=False)
        object.__setattr__(self, "a", arr)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @classmethod
    def scalar(cls, a11: float) -> "InteractionMatrix":
        return cls(np.array([[a11]]))

    @classmethod
    def zeros(cls, n: int) -> "InteractionMatrix":
        return cls(np.zeros((n, n)))


class MassRegime(Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class MassClass:
    """Classification of a mass vector with witnessing subsets.

    For CRITICAL, ``witnesses`` lists every subset with Lambda_J = 0; for
    SUPERCRITICAL it holds a single minimal-cardinality subset with
    Lambda_J < 0 (ties broken by lexicographic order).  Subsets use
    0-based species indices.
    """

    regime: MassRegime
    witnesses: tuple[frozenset[int], ...] = ()

    @property
    def is_subcritical(self) -> bool:
        return self.regime is MassRegime.SUBCRITICAL


def _check_beta(beta) -> np.ndarray:
    b = np.atleast_1d(np.asarray(beta, dtype=float))
    if b.ndim != 1 or b.size == 0:
        raise InvalidArgumentError("beta must be a nonempty vector")
    if np.any(b <= 0) or not np.all(np.isfinite(b)):
        raise InvalidArgumentError("masses must be positive and finite")
    return b


def lambda_subset(beta, a: InteractionMatrix, subset) -> float:
    """Lambda_J(beta) = sum_{i in J} beta_i (8 pi - sum_{j in J} a_ij beta_j)."""
    b = _check_beta(beta)
    n = b.size
    if a.n != n:
        raise InvalidArgumentError("interaction matrix size does not match beta")
    idx = sorted(set(int(i) for i in subset))
    if not idx:
        raise InvalidArgumentError("subset must be nonempty")
    if idx[0] < 0 or idx[-1] >= n:
        raise InvalidArgumentError(f"subset indices out of range for n={n}")
    sub_b = b[idx]
    sub_a = a.a[np.ix_(idx, idx)]
    return float(np.sum(sub_b * (EIGHT_PI - sub_a @ sub_b)))


def classify_mass(beta, a: InteractionMatrix) -> MassClass:
    """Exhaustively classify beta over all nonempty subsets of {1,...,n}.

    SUBCRITICAL iff Lambda_J > 0 for all J; SUPERCRITICAL if some
    Lambda_J < 0 (minimal-cardinality witness reported); CRITICAL otherwise,
    with every zero subset reported.
    """
    b = _check_beta(beta)
    n = b.size
    if a.n != n:
        raise InvalidArgumentError("interaction matrix size does not match beta")
    if n > MAX_SPECIES_FOR_CLASSIFY:
        raise InvalidArgumentError(
            f"classification enumerates 2^n - 1 subsets; n={n} exceeds cap "
            f"{MAX_SPECIES_FOR_CLASSIFY}"
        )
    zero_tol = _ZERO_REL_TOL * EIGHT_PI * float(b.sum())
    zeros: list[frozenset[int]] = []
    for size in range(1, n + 1):
        for subset in combinations(range(n), size):
            lam = lambda_subset(b, a, subset)
            if lam < -zero_tol:
                return MassClass(MassRegime.SUPERCRITICAL, (frozenset(subset),))
            if abs(lam) <= zero_tol:
                zeros.append(frozenset(subset))
    if zeros:
        return MassClass(MassRegime.CRITICAL, tuple(zeros))
    return MassClass(MassRegime.SUBCRITICAL)


def predicted_moment_slope(beta, a: InteractionMatrix) -> float:
    """Growth rate of the total second moment: Lambda_I(beta) / (2 pi)."""
    b = _check_beta(beta)
    return lambda_subset(b, a, range(b.size)) / (2.0 * math.pi)
