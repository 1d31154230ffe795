import itertools
import math

import numpy as np
import pytest

from pksflow import Grid, MultiDensity, exact_w2_lp, make_gaussian, product_distance, sinkhorn_w2
from pksflow.grids import InvalidArgumentError, random_smooth_field


def _cell_mass(grid, p, q, m=1.0):
    vals = np.zeros((grid.cells_per_side,) * 2)
    vals[p, q] = m / grid.cell_area
    return vals


def test_identical_inputs_zero():
    grid = Grid(4.0, 32)
    g = make_gaussian(grid, sigma=0.8, mass=1.0)
    res = sinkhorn_w2(g, g, grid, tol=1e-10)
    assert res.converged
    assert abs(res.w2_squared) <= 1e-9


def test_single_cells_forced_plan():
    grid = Grid(4.0, 32)
    mu = _cell_mass(grid, 8, 16)
    nu = _cell_mass(grid, 24, 16)
    d = grid.coords[24] - grid.coords[8]
    res = sinkhorn_w2(mu, nu, grid, eps=grid.spacing**2, tol=1e-9)
    assert res.w2_squared == pytest.approx(d * d, abs=1e-6)


def test_gaussians_match_lp_on_coarsening():
    # analytic anchor: equal-sigma gaussians transport at |m1 - m2|^2 = 4
    fine = Grid(6.0, 64)
    a = make_gaussian(fine, center=(0, 0), sigma=0.5, mass=1.0)
    b = make_gaussian(fine, center=(2, 0), sigma=0.5, mass=1.0)
    res = sinkhorn_w2(a, b, fine)
    assert res.converged
    assert res.w2_squared == pytest.approx(4.0, rel=0.01)

    coarse = Grid(6.0, 32)
    a32 = make_gaussian(coarse, center=(0, 0), sigma=0.5, mass=1.0)
    b32 = make_gaussian(coarse, center=(2, 0), sigma=0.5, mass=1.0)
    res32 = sinkhorn_w2(a32, b32, coarse)
    lp32 = exact_w2_lp(a32, b32, coarse)
    assert abs(res32.w2_squared - lp32) <= max(2 * res32.eps_final, 0.01 * lp32)


def test_mass_mismatch_rejected():
    grid = Grid(2.0, 16)
    with pytest.raises(InvalidArgumentError):
        sinkhorn_w2(make_gaussian(grid, mass=1.0), make_gaussian(grid, mass=1.01), grid)


def test_nonconvergence_is_flagged():
    grid = Grid(4.0, 32)
    mu = make_gaussian(grid, center=(-2, 0), sigma=0.4, mass=1.0)
    nu = make_gaussian(grid, center=(2, 0), sigma=0.4, mass=1.0)
    res = sinkhorn_w2(mu, nu, grid, eps=grid.spacing**2, tol=1e-12, max_iter=3)
    assert not res.converged
    assert res.marginal_error > 1e-12


def test_symmetry_exact():
    grid = Grid(4.0, 32)
    rng = np.random.default_rng(31)
    mu = random_smooth_field(grid, rng)
    nu = random_smooth_field(grid, rng)
    r1 = sinkhorn_w2(mu, nu, grid)
    r2 = sinkhorn_w2(nu, mu, grid)
    assert r1.w2_squared == r2.w2_squared


def test_translation_equivariance_whole_cells():
    grid = Grid(6.0, 48)
    mu = make_gaussian(grid, center=(-1.0, 0.5), sigma=0.5, mass=1.0)
    nu = make_gaussian(grid, center=(0.5, -0.5), sigma=0.7, mass=1.0)
    base = sinkhorn_w2(mu, nu, grid, tol=1e-9).w2_squared
    shift = 4  # cells, same offset applied to both inputs
    mu_s = np.roll(mu, shift, axis=0)
    nu_s = np.roll(nu, shift, axis=0)
    shifted = sinkhorn_w2(mu_s, nu_s, grid, tol=1e-9).w2_squared
    assert abs(base - shifted) <= 1e-9 * max(1.0, base)


def test_mass_rescaling_convention():
    # beta-mass inputs equal beta times the normalized value: both code paths
    grid = Grid(4.0, 32)
    rng = np.random.default_rng(41)
    mu1 = random_smooth_field(grid, rng, mass=1.0)
    nu1 = random_smooth_field(grid, rng, mass=1.0)
    beta = 3.7
    r_norm = sinkhorn_w2(mu1, nu1, grid)
    r_beta = sinkhorn_w2(beta * mu1, beta * nu1, grid)
    assert r_beta.w2_squared == pytest.approx(beta * r_norm.w2_squared, rel=1e-12)


def test_eps_monotone_refinement():
    # halving sweep down to the one-cell blur h^2: below grid resolution the
    # value crosses over to the discrete-LP limit instead
    grid = Grid(4.0, 32)
    mu = make_gaussian(grid, center=(-0.5, 0), sigma=0.6, mass=1.0)
    nu = make_gaussian(grid, center=(0.75, 0.25), sigma=0.9, mass=1.0)
    h2 = grid.spacing**2
    values = [sinkhorn_w2(mu, nu, grid, eps=e, tol=1e-9).w2_squared for e in (8 * h2, 4 * h2, 2 * h2, h2)]
    diffs = [abs(a - b) for a, b in zip(values, values[1:])]
    assert diffs[1] <= diffs[0]
    assert diffs[2] <= diffs[1]


def test_lp_identical_and_single_cells():
    grid = Grid(4.0, 16)
    g = make_gaussian(grid, sigma=1.0, mass=1.0)
    assert exact_w2_lp(g, g, grid) == pytest.approx(0.0, abs=1e-12)
    mu = _cell_mass(grid, 3, 8)
    nu = _cell_mass(grid, 11, 8)
    d = grid.coords[11] - grid.coords[3]
    assert exact_w2_lp(mu, nu, grid) == pytest.approx(d * d, rel=1e-12)


def test_lp_against_brute_force_three_point_supports():
    # equal masses on <= 3 atoms: the optimal plan is a permutation coupling
    grid = Grid(2.0, 16)
    rng = np.random.default_rng(17)
    x = grid.coords
    for _ in range(25):
        ia = rng.choice(16 * 16, size=3, replace=False)
        ib = rng.choice(16 * 16, size=3, replace=False)
        mu = np.zeros((16, 16))
        nu = np.zeros((16, 16))
        mu.flat[ia] = 1.0 / (3 * grid.cell_area)
        nu.flat[ib] = 1.0 / (3 * grid.cell_area)
        pa = np.stack([x[ia // 16], x[ia % 16]], 1)
        pb = np.stack([x[ib // 16], x[ib % 16]], 1)
        cost = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2)
        brute = min(
            sum(cost[i, perm[i]] for i in range(3)) / 3.0
            for perm in itertools.permutations(range(3))
        )
        assert exact_w2_lp(mu, nu, grid) == pytest.approx(brute, rel=1e-10)


def test_lp_lower_bounds_feasible_plans():
    grid = Grid(1.0, 8)
    rng = np.random.default_rng(23)
    mu = rng.random((8, 8))
    nu = rng.random((8, 8))
    mu /= mu.sum() * grid.cell_area
    nu /= nu.sum() * grid.cell_area
    lp = exact_w2_lp(mu, nu, grid)
    x = grid.coords
    xx, yy = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([xx.ravel(), yy.ravel()], 1)
    cost = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    w_mu = mu.ravel() * grid.cell_area
    w_nu = nu.ravel() * grid.cell_area
    for _ in range(100):
        # random feasible plan by greedy allocation over a shuffled cell order
        plan_cost = 0.0
        rows = w_mu.copy()
        cols = w_nu.copy()
        order = rng.permutation(len(rows) * len(cols))
        for flat in order:
            i, j = divmod(int(flat), len(cols))
            move = min(rows[i], cols[j])
            if move > 0:
                plan_cost += move * cost[i, j]
                rows[i] -= move
                cols[j] -= move
        assert lp <= plan_cost + 1e-12


def test_lp_refuses_large_supports():
    grid = Grid(4.0, 64)
    g1 = make_gaussian(grid, sigma=1.0, mass=1.0)
    g2 = make_gaussian(grid, sigma=1.2, mass=1.0)
    with pytest.raises(InvalidArgumentError):
        exact_w2_lp(g1, g2, grid)  # full 64^2 support exceeds the cap


def test_product_distance_trivial_and_translation():
    grid = Grid(6.0, 48)
    b1, b2 = 2.0, 0.7
    base = np.stack(
        [make_gaussian(grid, sigma=0.5, mass=b1), make_gaussian(grid, center=(1, 1), sigma=0.4, mass=b2)]
    )
    rho = MultiDensity(grid, base, np.array([b1, b2]))
    assert product_distance(rho, rho) <= 1e-5

    d_cells = 8
    d = d_cells * grid.spacing
    shifted = base.copy()
    shifted[0] = np.roll(base[0], d_cells, axis=0)
    eta = MultiDensity(grid, shifted, np.array([b1, b2]))
    # species 1 translated by d, species 2 identical: distance = d sqrt(b1)
    assert product_distance(rho, eta) == pytest.approx(d * math.sqrt(b1), rel=5e-3)


def test_product_distance_triangle_inequality():
    grid = Grid(3.0, 24)
    rng = np.random.default_rng(47)
    eps = grid.spacing**2
    for _ in range(5):
        fields = [
            MultiDensity(grid, random_smooth_field(grid, rng, mass=1.5)[None], np.array([1.5]))
            for _ in range(3)
        ]
        d01 = product_distance(fields[0], fields[1], eps=eps)
        d12 = product_distance(fields[1], fields[2], eps=eps)
        d02 = product_distance(fields[0], fields[2], eps=eps)
        assert d02 <= d01 + d12 + 2 * eps
