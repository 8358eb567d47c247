import numpy as np
import pytest

from stratacc.density import (
    DensityModel,
    fit_kde,
    root_cumulative_boundaries,
    silverman_bandwidth,
)


def uniform_model(grid_size=1001):
    grid = np.linspace(0.0, 1.0, grid_size)
    return DensityModel(grid=grid, density=np.ones(grid_size), bandwidth=0.1)


def test_silverman_matches_hand_formula():
    rng = np.random.default_rng(0)
    z = rng.normal(0.0, 2.0, 500)
    sd = z.std(ddof=1)
    iqr = np.percentile(z, 75) - np.percentile(z, 25)
    expected = 1.06 * min(sd, iqr / 1.34) * 500 ** (-0.2)
    assert silverman_bandwidth(z) == pytest.approx(expected, rel=1e-12)


def test_silverman_zero_iqr_falls_back_to_std():
    z = np.zeros(100)
    z[-1] = 1.0  # IQR is 0 but the spread is not
    assert silverman_bandwidth(z) > 0.0


def test_fit_kde_rejects_constant_input():
    with pytest.raises(ValueError, match="degenerate"):
        fit_kde(np.full(50, 0.5))


def test_fit_kde_integral_is_normalised():
    rng = np.random.default_rng(1)
    for z in (rng.uniform(0, 1, 400), rng.normal(5, 2, 1000), rng.beta(2, 5, 300)):
        model = fit_kde(z)
        total = np.trapezoid(model.density, model.grid)
        assert 0.99 <= total <= 1.01


def test_fit_kde_peak_near_center_of_symmetric_sample():
    rng = np.random.default_rng(2)
    half = rng.normal(0.5, 0.1, 500)
    z = np.concatenate([half, 1.0 - half])  # exactly symmetric around 0.5
    model = fit_kde(z)
    peak = model.grid[np.argmax(model.density)]
    assert abs(peak - 0.5) <= model.grid_step


def test_density_model_validates_integral():
    grid = np.linspace(0.0, 1.0, 101)
    with pytest.raises(ValueError, match="integral"):
        DensityModel(grid=grid, density=np.full(101, 2.0), bandwidth=0.1)


def test_uniform_boundaries_split_evenly():
    model = uniform_model()
    b2 = root_cumulative_boundaries(model, 2, 0.5)
    assert b2 == pytest.approx([0.5], abs=model.grid_step)
    for exponent in (0.5, 1.0 / 3.0):
        b4 = root_cumulative_boundaries(model, 4, exponent)
        assert b4 == pytest.approx([0.25, 0.5, 0.75], abs=model.grid_step)


def test_triangular_boundary_matches_brute_force_integration():
    # density f(z) = 2z on [0, 1]; trapezoid integral is exactly 1
    grid = np.linspace(0.0, 1.0, 4097)
    model = DensityModel(grid=grid, density=2.0 * grid, bandwidth=0.05)
    (boundary,) = root_cumulative_boundaries(model, 2, 0.5)

    # brute-force oracle: cumulative of sqrt(f) on a 10^6-point grid
    fine = np.linspace(0.0, 1.0, 1_000_001)
    g = np.sqrt(2.0 * fine)
    cum = np.concatenate([[0.0], np.cumsum((g[1:] + g[:-1]) / 2.0 * (fine[1] - fine[0]))])
    crossing = fine[np.searchsorted(cum, cum[-1] / 2.0)]
    assert boundary == pytest.approx(crossing, abs=1e-3)
    # the analytic median of sqrt(f): x^(3/2) = 1/2
    assert boundary == pytest.approx(0.5 ** (2.0 / 3.0), abs=1e-3)


def test_boundaries_strictly_increasing_and_interior():
    rng = np.random.default_rng(3)
    model = fit_kde(rng.beta(2, 3, 2000))
    for k in range(2, 11):
        for exponent in (0.5, 1.0 / 3.0):
            bounds = root_cumulative_boundaries(model, k, exponent)
            assert len(bounds) == k - 1
            assert np.all(np.diff(bounds) > 0)
            assert bounds[0] > model.grid[0]
            assert bounds[-1] < model.grid[-1]


def test_doubling_grid_moves_boundaries_less_than_coarse_step():
    rng = np.random.default_rng(4)
    z = rng.normal(0.0, 1.0, 3000)
    coarse = fit_kde(z, grid_size=512)
    fine = fit_kde(z, grid_size=1024)
    for k in (2, 5, 10):
        b_coarse = root_cumulative_boundaries(coarse, k, 0.5)
        b_fine = root_cumulative_boundaries(fine, k, 0.5)
        assert np.all(np.abs(b_coarse - b_fine) < coarse.grid_step)


def test_k_exceeding_grid_cells_rejected():
    grid = np.linspace(0.0, 1.0, 5)
    model = DensityModel(grid=grid, density=np.ones(5), bandwidth=0.1)
    with pytest.raises(ValueError, match="grid cells"):
        root_cumulative_boundaries(model, 5, 0.5)


def test_unsupported_exponent_rejected():
    with pytest.raises(ValueError, match="exponent"):
        root_cumulative_boundaries(uniform_model(), 4, 0.25)
