"""Entropic proximal solver for one minimizing-movement step of one species.

Given the previous cell-mass vector P (a probability after mass rescaling)
and a frozen potential V, the inner problem is

    min_Q  2 tau [ sum Q ln Q + <V_eff, Q> ] + OT_eps(P, Q),

where OT_eps is entropic transport with quadratic cost and Gibbs kernel
K = exp(-c/eps).  Alternating (generalized Sinkhorn) projections solve it:
the row marginal is projected onto P exactly, and the entropy-plus-potential
marginal has the closed-form update

    Q = s^kappa * exp(-(1 - kappa)(1 + V_eff)),   kappa = eps / (2 tau + eps),

with s = K^T a, which is the exact entropy prox in the log domain.

V_eff carries, besides the frozen interaction potential, the linearization
of the self-transport debiasing term -OT_eps(Q, Q)/2 at the current outer
iterate: its gradient is -eps ln m where m solves m * (K m) = Q.  With that
term the step objective is the Sinkhorn divergence S_eps(P, Q)/(2 tau) + F,
whose minimizer at tau -> 0 is P itself, so the entropic blur of the raw
prox (variance eps/2 per axis per step) cancels and the scheme tracks the
continuum flow.

Kernel applications use the separable factorization K v = K1 @ v @ K1 with
the per-axis Gaussian matrix K1, O(N^3) per application.  All scalings stay
in the linear domain: after the vacuum floor every density is strictly
positive, the kernel is effectively banded, and quotients are guarded by an
absolute floor only where they would divide by an underflowed zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import Grid

_TINY = 1e-300
# relative vacuum floor applied to step inputs; keeps ln(density) finite so
# the debiasing potential is defined everywhere (mass impact ~ N^2 * 1e-250)
DENSITY_FLOOR_REL = 1e-250

_K1_CACHE: dict[tuple[int, float, float], np.ndarray] = {}


def axis_kernel(grid: Grid, eps: float) -> np.ndarray:
    """Per-axis Gibbs kernel matrix exp(-(x_i - x_j)^2 / eps)."""
    key = (grid.cells_per_side, grid.half_extent, eps)
    k1 = _K1_CACHE.get(key)
    if k1 is None:
        x = grid.coords
        k1 = np.exp(-((x[:, None] - x[None, :]) ** 2) / eps)
        if len(_K1_CACHE) > 16:
            _K1_CACHE.clear()
        _K1_CACHE[key] = k1
    return k1


def kernel_apply(k1: np.ndarray, v: np.ndarray) -> np.ndarray:
    return k1 @ v @ k1


def floor_density(values: np.ndarray) -> np.ndarray:
    top = float(values.max())
    if top <= 0:
        raise ValueError("cannot floor an identically zero density")
    return np.maximum(values, DENSITY_FLOOR_REL * top)


@dataclass
class ProxSolution:
    q: np.ndarray  # implied second marginal (cell masses)
    f: np.ndarray  # eps * ln a, dual potential on the P side
    g: np.ndarray  # eps * ln b, dual potential on the Q side
    b: np.ndarray  # raw column scaling, reusable as a warm start
    iterations: int
    converged: bool


def entropy_prox(
    k1: np.ndarray,
    p: np.ndarray,
    v_eff: np.ndarray,
    tau: float,
    eps: float,
    stop_l1: float,
    max_iter: int,
    b0: np.ndarray | None = None,
) -> ProxSolution:
    """Solve the frozen-potential proximal problem by alternating projections."""
    kappa = eps / (2.0 * tau + eps)
    # exponent clipped at the float64 underflow edge; cells driven below it
    # carry no representable mass anyway
    log_chi = np.clip(-(1.0 - kappa) * (1.0 + v_eff), -745.0, 50.0)
    chi = np.exp(log_chi)
    b = np.ones_like(p) if b0 is None else b0
    q_prev: np.ndarray | None = None
    iterations = 0
    converged = False
    a = np.ones_like(p)
    q = p
    for iterations in range(1, max_iter + 1):
        kb = kernel_apply(k1, b)
        a = p / np.maximum(kb, _TINY)
        s = kernel_apply(k1, a)
        s_safe = np.maximum(s, _TINY)
        q = np.power(s_safe, kappa) * chi
        b = q / s_safe
        if q_prev is not None:
            change = float(np.abs(q - q_prev).sum())
            if change <= stop_l1:
                converged = True
                break
        q_prev = q
    with np.errstate(divide="ignore"):
        f = eps * np.log(np.maximum(a, _TINY))
        g = eps * np.log(np.maximum(b, _TINY))
    return ProxSolution(q=q, f=f, g=g, b=b, iterations=iterations, converged=converged)


def self_potential(
    k1: np.ndarray,
    q: np.ndarray,
    eps: float,
    m0: np.ndarray | None = None,
    stop_log: float = 1e-9,
    max_iter: int = 400,
) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric scaling m with m * (K m) = q; returns (m, eps * ln m).

    eps * ln m is the dual potential of the self problem OT_eps(q, q) under
    the same kernel convention as entropy_prox, and -eps ln m is the
    gradient of -OT_eps(q, q)/2 used for debiasing.
    """
    m = np.sqrt(q) if m0 is None else m0
    for _ in range(max_iter):
        km = kernel_apply(k1, m)
        ratio = q / np.maximum(m * km, _TINY)
        m_new = m * np.sqrt(ratio)
        delta = 0.5 * float(np.abs(np.log(np.maximum(ratio, _TINY))).max())
        m = m_new
        if delta <= stop_log:
            break
    with np.errstate(divide="ignore"):
        pot = eps * np.log(np.maximum(m, _TINY))
    return m, pot


def masked_dot(pot: np.ndarray, weights: np.ndarray) -> float:
    return float(np.sum(np.where(weights > 0, pot, 0.0) * weights))


@dataclass
class SpeciesWorkspace:
    """Warm-start state carried across outer iterations and steps."""

    b: np.ndarray | None = None
    m: np.ndarray | None = None


@dataclass
class SchemeWorkspace:
    species: list[SpeciesWorkspace] = field(default_factory=list)
    prev_energy: object | None = None  # EnergyReport of the previous accepted state

    def for_species(self, n: int) -> list[SpeciesWorkspace]:
        while len(self.species) < n:
            self.species.append(SpeciesWorkspace())
        return self.species
