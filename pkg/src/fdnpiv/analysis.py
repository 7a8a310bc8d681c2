"""Capacity, critical occupancy and capacity-drop read off a fitted flow-occupancy band."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .summary import CurveBand

DENSITY_FLOOR = 0.005
CELL_WIDTH = 1.0
DROP_WINDOW = 10.0


@dataclass(frozen=True)
class CapacityEstimate:
    o_c: float
    q_c: float
    index: int
    boundary: bool
    q_c_sd: float | None = None


@dataclass(frozen=True)
class CapacityReport:
    o_c: float
    q_c: float
    q_c_per_hour: float
    o_star: float
    q_star: float
    drop_pct: float
    significant: bool | None
    backward_bend: bool | None
    boundary_capacity: bool = False
    q_c_sd: float | None = None
    q_c_sd_per_hour: float | None = None
    grid_resolution: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def data_density(grid, support, cell_width: float = CELL_WIDTH) -> np.ndarray:
    """Fraction of observations within ``cell_width / 2`` of each grid point."""
    s = np.sort(np.asarray(support, dtype=float))
    g = np.asarray(grid, dtype=float)
    lo = np.searchsorted(s, g - 0.5 * cell_width, side="left")
    hi = np.searchsorted(s, g + 0.5 * cell_width, side="right")
    return (hi - lo) / s.size


def _dense(band, support, floor, cell_width):
    if support is None:
        return np.ones(band.grid.size, dtype=bool)
    return data_density(band.grid, support, cell_width) >= floor


def extract_capacity(band: CurveBand, support=None, floor: float = DENSITY_FLOOR,
                     cell_width: float = CELL_WIDTH) -> CapacityEstimate:
    """Critical occupancy and capacity: the argmax of the posterior mean curve.

    Only grid points with at least `floor` of the observations within a
    cell of `cell_width` occupancy points are eligible; ties go to the
    smaller occupancy. A maximum at the first or last eligible point is
    flagged as a boundary capacity.
    """
    ok = _dense(band, support, floor, cell_width)
    if not ok.any():
        raise ValueError("no grid point has enough data to locate the capacity")
    idx = np.flatnonzero(ok)
    i = int(idx[np.argmax(band.mean[idx])])
    sd = None if band.sd is None else float(band.sd[i])
    return CapacityEstimate(float(band.grid[i]), float(band.mean[i]), i,
                            i in (idx[0], idx[-1]), sd)


def detect_capacity_drop(band: CurveBand, capacity: CapacityEstimate, support=None,
                         window: float = DROP_WINDOW, floor: float = DENSITY_FLOOR,
                         cell_width: float = CELL_WIDTH) -> CapacityReport:
    """Locate the post-activation flow minimum and judge its significance.

    ``o*`` is the argmin of the mean over ``(o_c, o_c + window]``. The drop is
    significant when the simultaneous band at ``o_c`` lies entirely above the
    band at ``o*``; a backward bend is reported when some well-supported point
    beyond ``o*`` lies entirely below the band at ``o*``. Either judgement is
    ``None`` (indeterminate) when the relevant region has no well-supported
    grid point.
    """
    g = band.grid
    i_c = capacity.index
    in_window = (g > g[i_c]) & (g <= g[i_c] + window + 1e-12)
    if not in_window.any():
        raise ValueError("grid does not extend beyond the critical occupancy")
    ok = _dense(band, support, floor, cell_width)
    cand = np.flatnonzero(in_window & ok)
    supported = cand.size > 0
    if not supported:
        cand = np.flatnonzero(in_window)
    i_s = int(cand[np.argmin(band.mean[cand])])
    q_c, q_s = band.mean[i_c], band.mean[i_s]
    drop = 100.0 * (q_c - q_s) / q_c

    significant = bool(band.sim_lo[i_c] > band.sim_hi[i_s]) if supported else None
    beyond = np.flatnonzero((g > g[i_s]) & ok)
    if supported and beyond.size:
        bend = bool(np.any(band.sim_hi[beyond] < band.sim_lo[i_s]))
    else:
        bend = None
    res = float(np.diff(g).mean()) if g.size > 1 else None
    sd = capacity.q_c_sd
    return CapacityReport(
        o_c=float(g[i_c]), q_c=float(q_c), q_c_per_hour=float(12 * q_c),
        o_star=float(g[i_s]), q_star=float(q_s), drop_pct=float(drop),
        significant=significant, backward_bend=bend,
        boundary_capacity=capacity.boundary, q_c_sd=sd,
        q_c_sd_per_hour=None if sd is None else 12 * sd, grid_resolution=res,
    )


def capacity_report(band: CurveBand, support=None, window: float = DROP_WINDOW,
                    floor: float = DENSITY_FLOOR, cell_width: float = CELL_WIDTH) -> CapacityReport:
    cap = extract_capacity(band, support, floor, cell_width)
    return detect_capacity_drop(band, cap, support, window, floor, cell_width)
