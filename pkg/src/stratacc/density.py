"""Gaussian-kernel density model of the stratification variable.

The density is evaluated on an equally spaced grid spanning the data range
and renormalised so that its trapezoidal integral over that range is one.
Without renormalisation the kernel mass falling outside [min(z), max(z)]
would make the grid integral undershoot for moderate bandwidths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import StratVariable

DEFAULT_GRID_SIZE = 1024

SQRT_EXPONENT = 0.5
CBRT_EXPONENT = 1.0 / 3.0
_ALLOWED_EXPONENTS = (SQRT_EXPONENT, CBRT_EXPONENT)


def _as_values(z: StratVariable | np.ndarray) -> np.ndarray:
    values = z.values if isinstance(z, StratVariable) else np.asarray(z, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("expected a nonempty 1-D sequence of stratification values")
    return values


def silverman_bandwidth(z: StratVariable | np.ndarray) -> float:
    """Rule-of-thumb bandwidth 1.06 * sigma * N^(-1/5).

    sigma is min(sample standard deviation, IQR/1.34); the IQR term is
    skipped when it is zero (heavily tied data) since it would collapse the
    bandwidth entirely.
    """
    values = _as_values(z)
    sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
    q75, q25 = np.percentile(values, [75.0, 25.0])
    iqr = float(q75 - q25)
    sigma = min(sd, iqr / 1.34) if iqr > 0.0 else sd
    if sigma <= 0.0:
        raise ValueError("degenerate stratification variable: no spread")
    return 1.06 * sigma * values.size ** (-0.2)


@dataclass(frozen=True)
class DensityModel:
    """Density values on an equally spaced grid over the data range."""

    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=np.float64))
        object.__setattr__(self, "density", np.asarray(self.density, dtype=np.float64))
        if self.grid.ndim != 1 or self.grid.size < 2:
            raise ValueError("grid must hold at least two points")
        if self.grid.shape != self.density.shape:
            raise ValueError("grid and density must be aligned")
        steps = np.diff(self.grid)
        if steps.min() <= 0.0:
            raise ValueError("grid must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("grid must be equally spaced")
        if self.density.min() < 0.0:
            raise ValueError("density values must be nonnegative")
        total = float(np.trapezoid(self.density, self.grid))
        if not 0.99 <= total <= 1.01:
            raise ValueError(f"density integral {total} outside [0.99, 1.01]")
        if not self.bandwidth > 0.0:
            raise ValueError("bandwidth must be positive")

    @property
    def grid_step(self) -> float:
        return float(self.grid[1] - self.grid[0])


def fit_kde(
    z: StratVariable | np.ndarray,
    bandwidth: float | None = None,
    grid_size: int = DEFAULT_GRID_SIZE,
) -> DensityModel:
    """Fit a Gaussian-kernel density to z, evaluated on ``grid_size`` points.

    Uses the Silverman bandwidth unless one is given. Raises if all values
    coincide, since no density can be estimated from zero spread.
    """
    values = _as_values(z)
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        raise ValueError("degenerate stratification variable: all values identical")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(values)
    if bandwidth <= 0.0:
        raise ValueError("bandwidth must be positive")
    grid = np.linspace(lo, hi, grid_size)
    density = np.zeros(grid_size, dtype=np.float64)
    # Chunked kernel sums keep the (N x grid) intermediate small.
    chunk = max(1, 2_000_000 // grid_size)
    inv_h = 1.0 / bandwidth
    for start in range(0, values.size, chunk):
        block = values[start : start + chunk]
        u = (grid[None, :] - block[:, None]) * inv_h
        density += np.exp(-0.5 * u * u).sum(axis=0)
    density /= values.size * bandwidth * np.sqrt(2.0 * np.pi)
    # Renormalise over the data range; see module docstring.
    density /= np.trapezoid(density, grid)
    return DensityModel(grid=grid, density=density, bandwidth=float(bandwidth))


def _cumulative_trapezoid(values: np.ndarray, step: float) -> np.ndarray:
    out = np.empty(values.size, dtype=np.float64)
    out[0] = 0.0
    np.cumsum((values[1:] + values[:-1]) * (0.5 * step), out=out[1:])
    return out


def root_cumulative_boundaries(
    model: DensityModel, k: int, exponent: float
) -> np.ndarray:
    """Stratum boundaries that split the cumulative of density**exponent evenly.

    Returns k-1 strictly increasing z-values where the cumulative of
    f(z)**exponent crosses 1/k, 2/k, ... of its total, located by linear
    interpolation between grid points. ``exponent`` must be 1/2 (square
    root rule) or 1/3 (cube root rule).
    """
    if k < 2:
        raise ValueError("need at least two strata")
    if k > model.grid.size - 1:
        raise ValueError(f"k={k} exceeds the {model.grid.size - 1} grid cells")
    if not any(np.isclose(exponent, e, rtol=0.0, atol=1e-12) for e in _ALLOWED_EXPONENTS):
        raise ValueError("exponent must be 1/2 or 1/3")
    transformed = model.density**exponent
    cum = _cumulative_trapezoid(transformed, model.grid_step)
    total = cum[-1]
    if total <= 0.0:
        raise ValueError("density is identically zero")
    targets = total * np.arange(1, k) / k
    # Last cell index is grid.size - 2; right-side crossings interpolate there.
    cells = np.clip(np.searchsorted(cum, targets, side="left") - 1, 0, cum.size - 2)
    gain = cum[cells + 1] - cum[cells]
    frac = np.where(gain > 0.0, (targets - cum[cells]) / np.where(gain > 0.0, gain, 1.0), 0.0)
    boundaries = model.grid[cells] + frac * model.grid_step
    if np.any(np.diff(boundaries) <= 0.0):
        raise ValueError("zero-density stretches leave too little mass for k strata")
    return boundaries
