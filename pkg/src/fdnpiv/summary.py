"""Posterior curve summaries: pointwise intervals, simultaneous bands, error densities."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .mixture import mixture_density

MIN_DRAWS = 100


@dataclass(frozen=True)
class CurveBand:
    grid: np.ndarray
    mean: np.ndarray
    pw_lo: np.ndarray
    pw_hi: np.ndarray
    sim_lo: np.ndarray
    sim_hi: np.ndarray
    delta: float
    inflation: float = 1.0
    sd: np.ndarray | None = None

    def scaled(self, k: float) -> "CurveBand":
        """Band for flows multiplied by ``k > 0``."""
        if k > 0:
            return CurveBand(self.grid, k * self.mean, k * self.pw_lo, k * self.pw_hi,
                             k * self.sim_lo, k * self.sim_hi, self.delta, self.inflation,
                             None if self.sd is None else k * self.sd)
        raise ValueError("scale factor must be positive")

    def shifted(self, dx: float) -> "CurveBand":
        return CurveBand(self.grid + dx, self.mean, self.pw_lo, self.pw_hi,
                         self.sim_lo, self.sim_hi, self.delta, self.inflation, self.sd)

    def contains(self, curves, tol: float = 0.0) -> np.ndarray:
        """Boolean per curve: lies inside the simultaneous band at every grid point."""
        curves = np.atleast_2d(curves)
        return np.all((curves >= self.sim_lo - tol) & (curves <= self.sim_hi + tol), axis=1)


@dataclass(frozen=True)
class DensityGrid:
    e1: np.ndarray
    e2: np.ndarray
    density: np.ndarray  # shape (len(e1), len(e2))
    coverage: float

    def mass(self) -> float:
        return float(self.density.sum() * np.diff(self.e1).mean() * np.diff(self.e2).mean())

    def local_maxima(self) -> list:
        """Grid points strictly greater than their 8 neighbours."""
        d = self.density
        pad = np.pad(d, 1, constant_values=-np.inf)
        is_max = np.ones_like(d, dtype=bool)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == dj == 0:
                    continue
                nb = pad[1 + di : 1 + di + d.shape[0], 1 + dj : 1 + dj + d.shape[1]]
                is_max &= d > nb
        return [(self.e1[i], self.e2[j]) for i, j in zip(*np.nonzero(is_max))]


def _samples(draws, which):
    if isinstance(draws, tuple):
        grid, samples = draws
    else:
        grid, samples = draws.curve_samples(which)
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] < MIN_DRAWS:
        raise ValueError(f"need at least {MIN_DRAWS} retained draws, got {samples.shape[0]}")
    return np.asarray(grid, dtype=float), samples


def pointwise_summary(draws, delta: float = 0.05, which: str = "S"):
    """Posterior mean and the ``delta/2``, ``1 - delta/2`` empirical quantiles.

    `draws` is a ``PosteriorDraws`` or a ``(grid, samples)`` pair. Quantiles
    interpolate linearly between order statistics.

    Returns
    -------
    grid, mean, lower, upper : numpy.ndarray
    """
    grid, samples = _samples(draws, which)
    mean = samples.mean(axis=0)
    lo, hi = np.quantile(samples, [delta / 2, 1 - delta / 2], axis=0, method="linear")
    return grid, mean, lo, hi


def containment(samples, mean, half_lo, half_hi, scale: float) -> float:
    inside = np.all((samples >= mean - scale * half_lo) & (samples <= mean + scale * half_hi),
                    axis=1)
    return float(inside.mean())


def simultaneous_band(draws, delta: float = 0.05, which: str = "S",
                      resolution: float = 1e-4) -> CurveBand:
    """Inflate the pointwise band until ``1 - delta`` of the curves fit inside.

    The half-widths of the pointwise interval around the posterior mean are
    multiplied by the smallest common factor ``>= 1`` (bisection to
    `resolution`) for which at least ``1 - delta`` of the sampled curves lie
    entirely inside the band.
    """
    grid, samples = _samples(draws, which)
    grid, mean, lo, hi = pointwise_summary((grid, samples), delta)
    half_lo = np.maximum(mean - lo, 0.0)
    half_hi = np.maximum(hi - mean, 0.0)
    target = 1.0 - delta

    if containment(samples, mean, half_lo, half_hi, 1.0) >= target:
        scale = 1.0
    else:
        # per-curve factor needed to be inside; infinite where a zero half-width is exceeded
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.where(samples > mean, (samples - mean) / half_hi, 0.0)
            dn = np.where(samples < mean, (mean - samples) / half_lo, 0.0)
        need = np.maximum(up, dn).max(axis=1)
        k = int(np.ceil(target * samples.shape[0])) - 1
        if not np.isfinite(np.sort(need)[k]):
            raise ValueError("degenerate zero-width pointwise band with varying draws")
        a, b = 1.0, float(np.sort(need)[k]) * (1 + 1e-9) + resolution
        while containment(samples, mean, half_lo, half_hi, b) < target:
            b *= 2.0
        while b - a > resolution:
            mid = 0.5 * (a + b)
            if containment(samples, mean, half_lo, half_hi, mid) >= target:
                b = mid
            else:
                a = mid
        scale = b
    return CurveBand(grid, mean, lo, hi, mean - scale * half_lo, mean + scale * half_hi,
                     delta, scale, samples.std(axis=0, ddof=1))


def error_density_grid(draws, n_points: int = 101, extent: float = 6.0,
                       e1=None, e2=None) -> DensityGrid:
    """Posterior-mean mixture density of ``(e1, e2)`` on a rectangular grid.

    By default the grid spans `extent` standard deviations of the posterior
    mean residuals in each direction.
    """
    if draws.means.shape[-1] != 2:
        raise ValueError("error density grid needs a bivariate (instrumented) fit")
    resid = draws.residual_mean
    if e1 is None or e2 is None:
        centre = resid.mean(axis=0)
        # mixture marginal spread averaged over draws
        var = np.einsum("mh,mhii->i", draws.weights, draws.covs) / draws.n_draws
        var += np.einsum("mh,mhi->i", draws.weights, draws.means ** 2) / draws.n_draws
        sd = np.sqrt(var)
        e1 = np.linspace(centre[0] - extent * sd[0], centre[0] + extent * sd[0], n_points)
        e2 = np.linspace(centre[1] - extent * sd[1], centre[1] + extent * sd[1], n_points)
    e1, e2 = np.asarray(e1, dtype=float), np.asarray(e2, dtype=float)
    pts = np.column_stack([np.repeat(e1, e2.size), np.tile(e2, e1.size)])
    dens = np.zeros(pts.shape[0])
    for w, mu, cov in zip(draws.weights, draws.means, draws.covs):
        dens += mixture_density(pts, w, mu, cov)
    dens = (dens / draws.n_draws).reshape(e1.size, e2.size)
    coverage = float(dens.sum() * np.diff(e1).mean() * np.diff(e2).mean())
    if coverage < 0.95:
        warnings.warn(f"density grid covers only {coverage:.1%} of the error mass",
                      RuntimeWarning, stacklevel=2)
    return DensityGrid(e1, e2, dens, coverage)


def write_band_csv(path, bands: dict) -> None:
    """Write ``{label: CurveBand}`` as ``estimator, grid, mean, pw_lo, pw_hi, sim_lo, sim_hi``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", "grid", "mean", "pw_lo", "pw_hi", "sim_lo", "sim_hi"])
        for label, b in bands.items():
            for row in zip(b.grid, b.mean, b.pw_lo, b.pw_hi, b.sim_lo, b.sim_hi):
                w.writerow([label, *(f"{v:.10g}" for v in row)])


def write_density_csv(path, dg: DensityGrid) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["e1", "e2", "density"])
        for i, a in enumerate(dg.e1):
            for j, b in enumerate(dg.e2):
                w.writerow([f"{a:.10g}", f"{b:.10g}", f"{dg.density[i, j]:.10g}"])
