"""Minimizing-movement scheme: step solver, driver, and trajectory diagnostics.

One step from rho^{k-1} approximately minimizes

    F(rho) + d_W^2(rho, rho^{k-1}) / (2 tau)

over same-mass densities.  An outer loop freezes the interaction potentials
u_j and the self-transport debiasing potential at the current iterate, which
decouples the species into entropic proximal problems (see
pksflow.proximal); refreshing and re-solving repeats until the L1 change
falls below the tolerance.  Since the frozen terms linearize concave parts
of the objective, each outer pass cannot increase the true step objective,
which yields the discrete one-step energy inequality

    F(rho^k) + d_W^2(rho^k, rho^{k-1}) / (2 tau) <= F(rho^{k-1})

up to solver tolerance; the StepReport records its slack and the
free-energy production ratio (d_W^2 / tau^2) / D_F(rho^k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import energy as energy_mod
from .criticality import InteractionMatrix, classify_mass, predicted_moment_slope
from .grids import Grid, InvalidArgumentError, MultiDensity, second_moment
from .proximal import (
    SchemeWorkspace,
    axis_kernel,
    entropy_prox,
    floor_density,
    masked_dot,
    self_potential,
)

BOUNDARY_HALT_FRACTION = 1e-3
BLOWUP_CELL_MASS_FRACTION = 0.5  # halt when one cell holds half a species' mass
ENTROPY_GROWTH_FACTOR = 10.0


@dataclass(frozen=True)
class JkoParams:
    """Step size, entropic regularization, and iteration controls.

    ``eps`` defaults to h^2 at solve time when left as None.  ``inner_tol``
    is the L1 (per unit mass) fixed-point tolerance on successive densities
    across outer potential refreshes; the inner Sinkhorn solves stop at
    a tenth of it.
    """

    tau: float
    eps: float | None = None
    inner_tol: float = 1e-7
    max_outer: int = 30
    max_inner: int = 2000

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise InvalidArgumentError("tau must be positive")
        if self.eps is not None and self.eps <= 0:
            raise InvalidArgumentError("eps must be positive")
        if self.inner_tol <= 0:
            raise InvalidArgumentError("inner_tol must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise InvalidArgumentError("iteration caps must be at least 1")

    def resolved_eps(self, grid: Grid) -> float:
        return self.eps if self.eps is not None else grid.spacing**2


@dataclass(frozen=True)
class StepReport:
    """Per-step solver and energy diagnostics, recorded even without convergence."""

    converged: bool
    outer_iters: int
    inner_iters: int
    energy_decrease: float  # F(prev) - F(new) - d_W^2/(2 tau), should be >= -tol
    production_ratio: float  # (d_W^2 / tau^2) / D_F(new), nan when D_F ~ 0
    w2_sq_per_species: tuple[float, ...]
    free_energy: float  # F at the new state
    entropy: float
    dissipation_per_species: tuple[float, ...]

    @property
    def w2_sq_total(self) -> float:
        return float(sum(self.w2_sq_per_species))

    @property
    def dissipation_total(self) -> float:
        return float(sum(self.dissipation_per_species))


@dataclass(frozen=True)
class StepRecord:
    """One diagnostics series row (step index k >= 1, time t = k tau)."""

    step: int
    t: float
    masses: tuple[float, ...]
    second_moment: float
    entropy: float
    free_energy: float
    dissipation: float
    dissipation_per_species: tuple[float, ...]
    w2_sq_per_species: tuple[float, ...]
    w2_sq_total: float
    boundary_mass_fraction: float
    production_ratio: float
    production_ratio_per_species: tuple[float, ...]
    energy_decrease: float
    outer_iters: int
    inner_iters: int
    converged: bool
    de_giorgi_dissipation: float | None = None


@dataclass(frozen=True)
class InitialRecord:
    masses: tuple[float, ...]
    second_moment: float
    entropy: float
    free_energy: float
    dissipation: float
    positive_entropy: float


@dataclass
class Trajectory:
    """Snapshots and diagnostic series of one scheme run."""

    grid: Grid
    params: JkoParams
    interaction: InteractionMatrix
    snapshots: list[tuple[float, MultiDensity]]
    series: list[StepRecord]
    initial: InitialRecord
    halt_status: str = "completed"

    @property
    def times(self) -> np.ndarray:
        return np.array([0.0] + [rec.t for rec in self.series])

    @property
    def second_moments(self) -> np.ndarray:
        return np.array([self.initial.second_moment] + [r.second_moment for r in self.series])

    def snapshot_at(self, t: float) -> MultiDensity:
        for ts, dens in self.snapshots:
            if abs(ts - t) <= 1e-12 * max(1.0, abs(t)):
                return dens
        raise InvalidArgumentError(f"no snapshot stored at t={t}")


def boundary_mass_fraction(rho: MultiDensity) -> float:
    """Largest per-species fraction of mass in the outermost cell ring."""
    n = rho.grid.cells_per_side
    ring = np.zeros((n, n), dtype=bool)
    ring[0, :] = ring[-1, :] = ring[:, 0] = ring[:, -1] = True
    area = rho.grid.cell_area
    fracs = [
        float(rho.values[i][ring].sum() * area / rho.target_masses[i])
        for i in range(rho.n_species)
    ]
    return max(fracs)


def _interaction_potential_grads(pots, a: InteractionMatrix, grid: Grid):
    h = grid.spacing
    grads = [np.gradient(p.values, h, edge_order=1) for p in pots]
    out = []
    for i in range(a.n):
        vx = np.zeros((grid.cells_per_side,) * 2)
        vy = np.zeros_like(vx)
        for j in range(a.n):
            if a.a[i, j] != 0.0:
                vx += a.a[i, j] * grads[j][0]
                vy += a.a[i, j] * grads[j][1]
        out.append((vx, vy))
    return out


def _frozen_potentials(rho_values: np.ndarray, betas: np.ndarray, grid: Grid,
                       a: InteractionMatrix) -> list[np.ndarray]:
    """V_i = -sum_j a_ij u_j from the current physical densities."""
    n_sp = rho_values.shape[0]
    if not np.any(a.a):
        zero = np.zeros((grid.cells_per_side,) * 2)
        return [zero] * n_sp
    pots = [energy_mod.newtonian_potential(rho_values[j], grid, j).values for j in range(n_sp)]
    out = []
    for i in range(n_sp):
        v = np.zeros((grid.cells_per_side,) * 2)
        for j in range(n_sp):
            if a.a[i, j] != 0.0:
                v -= a.a[i, j] * pots[j]
        out.append(v)
    return out


def _ensure_gate(beta: np.ndarray, a: InteractionMatrix, allow_supercritical: bool) -> None:
    cls = classify_mass(beta, a)
    if not cls.is_subcritical and not allow_supercritical:
        raise InvalidArgumentError(
            f"mass vector is {cls.regime.value}; the scheme is guaranteed for "
            "sub-critical masses only (pass allow_supercritical=True to run a "
            "monitored blow-up experiment)"
        )


def jko_step(
    rho_prev: MultiDensity,
    a: InteractionMatrix,
    p: JkoParams,
    allow_supercritical: bool = False,
    _workspace: SchemeWorkspace | None = None,
    _tau_override: float | None = None,
) -> tuple[MultiDensity, StepReport]:
    """One minimizing-movement step from ``rho_prev``.

    Returns the new state with per-species masses re-imposed exactly, plus a
    StepReport.  Non-convergence is flagged on the report and the last
    iterate is returned; NaN or negative densities raise.
    """
    if a.n != rho_prev.n_species:
        raise InvalidArgumentError("interaction matrix size does not match density")
    beta = rho_prev.target_masses
    _ensure_gate(beta, a, allow_supercritical)

    grid = rho_prev.grid
    tau = p.tau if _tau_override is None else _tau_override
    eps = p.resolved_eps(grid)
    area = grid.cell_area
    n_sp = rho_prev.n_species
    k1 = axis_kernel(grid, eps)
    ws = _workspace if _workspace is not None else SchemeWorkspace()
    sp_ws = ws.for_species(n_sp)
    inner_stop = 0.1 * p.inner_tol
    debias_scale = eps / (2.0 * tau)

    # vacuum floor keeps every log finite; mass error is far below tolerance
    p_mass = np.empty((n_sp,) + rho_prev.values.shape[1:])
    for i in range(n_sp):
        floored = floor_density(rho_prev.values[i])
        p_mass[i] = floored * (area / (floored.sum() * area))

    q_cur = p_mass.copy()
    self_pot_at_p: list[np.ndarray] = [None] * n_sp
    solutions = [None] * n_sp
    total_inner = 0
    outer_used = 0
    outer_converged = False
    for outer in range(1, p.max_outer + 1):
        outer_used = outer
        rho_cur_values = q_cur * (beta[:, None, None] / area)
        v_int = _frozen_potentials(rho_cur_values, beta, grid, a)
        change = 0.0
        for i in range(n_sp):
            m_i, pot_i = self_potential(k1, q_cur[i], eps, m0=sp_ws[i].m)
            sp_ws[i].m = m_i
            if outer == 1:
                self_pot_at_p[i] = pot_i
            v_eff = v_int[i] - debias_scale * (pot_i / eps)
            sol = entropy_prox(
                k1, p_mass[i], v_eff, tau, eps, inner_stop, p.max_inner, b0=sp_ws[i].b
            )
            sp_ws[i].b = sol.b
            total_inner += sol.iterations
            q_new = sol.q / sol.q.sum()
            change = max(change, float(np.abs(q_new - q_cur[i]).sum()))
            q_cur[i] = q_new
            solutions[i] = sol
        if change <= p.inner_tol:
            outer_converged = True
            break

    if any(not np.all(np.isfinite(q)) for q in q_cur):
        raise RuntimeError("proximal solver produced non-finite densities (internal error)")

    # debiased squared step distances: S_eps = <f,P> + <g,Q> - <f_P,P> - <f_Q,Q>
    w2_sq = []
    for i in range(n_sp):
        m_q, pot_q = self_potential(k1, q_cur[i], eps, m0=sp_ws[i].m)
        sp_ws[i].m = m_q
        sol = solutions[i]
        s_val = (
            masked_dot(sol.f, p_mass[i])
            + masked_dot(sol.g, q_cur[i])
            - masked_dot(self_pot_at_p[i], p_mass[i])
            - masked_dot(pot_q, q_cur[i])
        )
        w2_sq.append(max(s_val, 0.0) * float(beta[i]))

    rho_new = MultiDensity(grid, q_cur * (beta[:, None, None] / area), beta)
    rho_new = rho_new.with_masses_imposed()

    prev_report = ws.prev_energy
    if prev_report is None:
        prev_report = energy_mod.free_energy(rho_prev, a)
    new_pots = energy_mod.potentials(rho_new) if np.any(a.a) else None
    new_report = energy_mod.free_energy(rho_new, a, new_pots)
    ws.prev_energy = new_report
    diss = energy_mod.dissipation_per_species(rho_new, a, new_pots)
    d_total = float(sum(diss))
    w2_total = float(sum(w2_sq))
    energy_decrease = prev_report.free_energy - new_report.free_energy - w2_total / (2.0 * tau)
    prod = w2_total / tau**2 / d_total if d_total > 1e-300 else math.nan

    solver_converged = outer_converged and all(sol.converged for sol in solutions)
    report = StepReport(
        converged=solver_converged,
        outer_iters=outer_used,
        inner_iters=total_inner,
        energy_decrease=energy_decrease,
        production_ratio=prod,
        w2_sq_per_species=tuple(w2_sq),
        free_energy=new_report.free_energy,
        entropy=new_report.entropy,
        dissipation_per_species=diss,
    )
    return rho_new, report


def de_giorgi_interpolate(
    rho_prev: MultiDensity,
    a: InteractionMatrix,
    p: JkoParams,
    delta_t: float,
    allow_supercritical: bool = False,
) -> MultiDensity:
    """Variational interpolant: the step from rho_prev with tau replaced by
    delta_t in (0, tau]; delta_t = tau reproduces jko_step."""
    if not 0.0 < delta_t <= p.tau:
        raise InvalidArgumentError("delta_t must lie in (0, tau]")
    rho, _ = jko_step(
        rho_prev, a, p, allow_supercritical=allow_supercritical, _tau_override=delta_t
    )
    return rho


def run_scheme(
    rho0: MultiDensity,
    a: InteractionMatrix,
    p: JkoParams,
    n_steps: int,
    callbacks=(),
    allow_supercritical: bool = False,
    sample_de_giorgi: bool = False,
) -> Trajectory:
    """Iterate jko_step ``n_steps`` times with full diagnostics.

    Halts early (with an explanatory status, not an error) when mass reaches
    the boundary ring, when one cell concentrates half a species' mass, or
    when the positive entropy grows tenfold -- beyond those thresholds the
    grid no longer represents the measure the scheme approximates.

    ``sample_de_giorgi`` also solves the variational interpolant at each
    mid-step time and records its dissipation for the discrete energy
    identity check.

    ``callbacks`` receive (k, StepReport, StepRecord) after every step.
    """
    if n_steps < 0:
        raise InvalidArgumentError("n_steps must be nonnegative")
    ent0 = energy_mod.entropy(rho0)
    m20 = second_moment(rho0)
    if not (math.isfinite(ent0) and math.isfinite(m20)):
        raise InvalidArgumentError("initial data must have finite entropy and second moment")
    _ensure_gate(rho0.target_masses, a, allow_supercritical)

    f0 = energy_mod.free_energy(rho0, a)
    initial = InitialRecord(
        masses=tuple(float(rho0.species(i).sum() * rho0.grid.cell_area) for i in range(rho0.n_species)),
        second_moment=m20,
        entropy=ent0,
        free_energy=f0.free_energy,
        dissipation=energy_mod.dissipation(rho0, a),
        positive_entropy=energy_mod.positive_entropy(rho0),
    )
    hplus_limit = ENTROPY_GROWTH_FACTOR * max(initial.positive_entropy, 1e-6)

    ws = SchemeWorkspace()
    ws.prev_energy = f0
    trajectory = Trajectory(
        grid=rho0.grid,
        params=p,
        interaction=a,
        snapshots=[(0.0, rho0)],
        series=[],
        initial=initial,
    )
    rho = rho0
    status = "completed"
    for k in range(1, n_steps + 1):
        dg_diss = None
        if sample_de_giorgi:
            rho_mid = de_giorgi_interpolate(
                rho, a, p, 0.5 * p.tau, allow_supercritical=allow_supercritical
            )
            dg_diss = energy_mod.dissipation(rho_mid, a)
        rho, report = jko_step(
            rho, a, p, allow_supercritical=allow_supercritical, _workspace=ws
        )
        area = rho.grid.cell_area
        per_species_prod = tuple(
            (w2 / p.tau**2 / d if d > 1e-300 else math.nan)
            for w2, d in zip(report.w2_sq_per_species, report.dissipation_per_species)
        )
        record = StepRecord(
            step=k,
            t=k * p.tau,
            masses=tuple(float(rho.species(i).sum() * area) for i in range(rho.n_species)),
            second_moment=second_moment(rho),
            entropy=report.entropy,
            free_energy=report.free_energy,
            dissipation=report.dissipation_total,
            dissipation_per_species=report.dissipation_per_species,
            w2_sq_per_species=report.w2_sq_per_species,
            w2_sq_total=report.w2_sq_total,
            boundary_mass_fraction=boundary_mass_fraction(rho),
            production_ratio=report.production_ratio,
            production_ratio_per_species=per_species_prod,
            energy_decrease=report.energy_decrease,
            outer_iters=report.outer_iters,
            inner_iters=report.inner_iters,
            converged=report.converged,
            de_giorgi_dissipation=dg_diss,
        )
        trajectory.series.append(record)
        trajectory.snapshots.append((record.t, rho))
        for cb in callbacks:
            cb(k, report, record)
        if record.boundary_mass_fraction > BOUNDARY_HALT_FRACTION:
            status = "halted_boundary_mass"
            break
        peak = max(
            float(rho.values[i].max()) * area / rho.target_masses[i]
            for i in range(rho.n_species)
        )
        if peak > BLOWUP_CELL_MASS_FRACTION:
            status = "halted_blowup_density"
            break
        if energy_mod.positive_entropy(rho) > hplus_limit:
            status = "halted_entropy_growth"
            break
    trajectory.halt_status = status
    return trajectory


def production_check(trajectory: Trajectory, a: InteractionMatrix) -> np.ndarray:
    """Per-step, per-species ratio of (d_W^2 / tau^2) to the dissipation at
    the new iterate, returned as an (n_steps, n_species) array."""
    if not trajectory.series:
        return np.zeros((0, trajectory.interaction.n))
    return np.array([rec.production_ratio_per_species for rec in trajectory.series])


@dataclass(frozen=True)
class EnergyIdentityReport:
    """Discrete energy identity along a run.

    identity:  F(0) = F(T) + (1/2) int D_F(pc) + (1/2) int D_F(de giorgi);
    ``defect`` is F(0) minus the right-hand side (0 for exact minimizers),
    and ``holds`` asserts the inequality direction F(T) + halves <= F(0)
    within tolerance.  When the run recorded no De Giorgi midpoints the
    second integral is absent and only the one-sided inequality (each
    dissipation half is nonnegative) is checked.
    """

    f_initial: float
    f_final: float
    pc_half_integral: float
    de_giorgi_half_integral: float | None
    defect: float
    energy_drop: float
    holds: bool


def energy_identity_report(
    trajectory: Trajectory,
    a: InteractionMatrix,
    tol: float = 1e-6,
) -> EnergyIdentityReport:
    recs = trajectory.series
    tau = trajectory.params.tau
    f0 = trajectory.initial.free_energy
    if not recs:
        return EnergyIdentityReport(f0, f0, 0.0, None, 0.0, 0.0, True)
    f_final = recs[-1].free_energy
    pc_half = 0.5 * tau * float(sum(r.dissipation for r in recs))
    has_dg = all(r.de_giorgi_dissipation is not None for r in recs)
    dg_half = 0.5 * tau * float(sum(r.de_giorgi_dissipation for r in recs)) if has_dg else None
    rhs = f_final + pc_half + (dg_half or 0.0)
    defect = f0 - rhs
    return EnergyIdentityReport(
        f_initial=f0,
        f_final=f_final,
        pc_half_integral=pc_half,
        de_giorgi_half_integral=dg_half,
        defect=defect,
        energy_drop=f0 - f_final,
        holds=defect >= -tol,
    )


def slope_check(
    trajectory: Trajectory,
    beta,
    a: InteractionMatrix,
    window: tuple[float, float],
) -> tuple[float, float, float]:
    """Least-squares slope of M_2 versus t over a time window, against the
    predicted Lambda_I(beta) / (2 pi).

    Returns (measured, predicted, relative_error).  The window must contain
    at least 5 samples.
    """
    t_lo, t_hi = window
    times = trajectory.times
    m2 = trajectory.second_moments
    mask = (times >= t_lo - 1e-15) & (times <= t_hi + 1e-15)
    if mask.sum() < 5:
        raise InvalidArgumentError(
            f"window [{t_lo}, {t_hi}] holds {int(mask.sum())} samples; at least 5 required"
        )
    t_sel = times[mask]
    y_sel = m2[mask]
    slope = float(np.polyfit(t_sel, y_sel, 1)[0])
    predicted = predicted_moment_slope(beta, a)
    rel = abs(slope - predicted) / abs(predicted) if predicted != 0 else abs(slope)
    return slope, predicted, rel


def pre_halt_window(trajectory: Trajectory, margin_steps: int = 0) -> tuple[float, float]:
    """Largest time window of the recorded series, shrunk by a step margin."""
    if not trajectory.series:
        raise InvalidArgumentError("trajectory has no steps")
    end = trajectory.series[max(0, len(trajectory.series) - 1 - margin_steps)].t
    return 0.0, end


def holder_constant(
    trajectory: Trajectory,
    n_times: int = 8,
    eps: float | None = None,
    tol: float = 1e-7,
) -> float:
    """Fitted constant C in d_W(rho(t), rho(s)) <= C (sqrt|t-s| + sqrt(tau)),
    over all pairs of ``n_times`` snapshot times spread across the run.

    Distances use the debiased entropic solver on the product metric.
    """
    from .transport import sinkhorn_w2

    if len(trajectory.snapshots) < 2:
        raise InvalidArgumentError("need at least two snapshots")
    tau = trajectory.params.tau
    idx = np.unique(np.linspace(0, len(trajectory.snapshots) - 1, n_times).astype(int))
    picks = [trajectory.snapshots[i] for i in idx]
    c_fit = 0.0
    for ai in range(len(picks)):
        for bi in range(ai + 1, len(picks)):
            ta, da = picks[ai]
            tb, db = picks[bi]
            d_sq = 0.0
            for i in range(da.n_species):
                res = sinkhorn_w2(da.values[i], db.values[i], trajectory.grid, eps=eps, tol=tol)
                d_sq += res.w2_squared
            c_pair = math.sqrt(d_sq) / (math.sqrt(abs(tb - ta)) + math.sqrt(tau))
            c_fit = max(c_fit, c_pair)
    return c_fit
