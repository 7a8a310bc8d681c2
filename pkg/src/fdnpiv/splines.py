"""B-spline bases and difference penalties for P-spline curve estimation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline


class DegenerateSupportError(ValueError):
    """Raised when a covariate has fewer than two distinct values."""


@dataclass(frozen=True)
class KnotVector:
    """Open (clamped) knot sequence with equidistant interior knots.

    Attributes
    ----------
    interior : int
        Number of interior knots.
    degree : int
        Polynomial degree of the basis.
    boundary : tuple of float
        ``(lo, hi)`` support of the covariate.
    knots : numpy.ndarray
        Full knot sequence; boundary knots repeated ``degree + 1`` times.
    """

    interior: int
    degree: int
    boundary: tuple[float, float]
    knots: np.ndarray

    @property
    def dimension(self) -> int:
        return self.interior + self.degree + 1

    @property
    def interior_knots(self) -> np.ndarray:
        return self.knots[self.degree + 1 : self.degree + 1 + self.interior]


@dataclass(frozen=True)
class PenaltyMatrix:
    order: int
    matrix: np.ndarray

    @property
    def rank(self) -> int:
        return self.matrix.shape[0] - self.order


def make_knots(x, interior: int = 20, degree: int = 3) -> KnotVector:
    """Build an equidistant open knot vector over the range of `x`.

    Parameters
    ----------
    x : array_like
        Covariate sample; only its minimum and maximum are used.
    interior : int
        Number of interior knots (>= 1).
    degree : int
        Spline degree (>= 1).

    Returns
    -------
    KnotVector
    """
    if interior < 1:
        raise ValueError(f"interior must be >= 1, got {interior}")
    if degree < 1:
        raise ValueError(f"degree must be >= 1, got {degree}")
    x = np.asarray(x, dtype=float)
    lo, hi = float(np.min(x)), float(np.max(x))
    if not hi > lo:
        raise DegenerateSupportError("covariate has fewer than two distinct values")
    inner = np.linspace(lo, hi, interior + 2)[1:-1]
    knots = np.concatenate([np.full(degree + 1, lo), inner, np.full(degree + 1, hi)])
    return KnotVector(interior, degree, (lo, hi), knots)


def design_matrix(kv: KnotVector, x) -> np.ndarray:
    """Evaluate every basis function of `kv` at the points `x`.

    Points outside the knot support are clamped to the nearest boundary and
    a ``RuntimeWarning`` is emitted.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lo, hi = kv.boundary
    outside = (x < lo) | (x > hi)
    if outside.any():
        warnings.warn(
            f"{int(outside.sum())} evaluation points outside [{lo:g}, {hi:g}] clamped",
            RuntimeWarning,
            stacklevel=2,
        )
        x = np.clip(x, lo, hi)
    return BSpline.design_matrix(x, kv.knots, kv.degree).toarray()


def difference_matrix(dimension: int, order: int) -> np.ndarray:
    return np.diff(np.eye(dimension), n=order, axis=0)


def penalty(dimension: int, order: int = 2) -> PenaltyMatrix:
    """Return ``K = D'D`` for the `order`-th difference operator ``D``."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if dimension <= order:
        raise ValueError(f"dimension ({dimension}) must exceed penalty order ({order})")
    d = difference_matrix(dimension, order)
    return PenaltyMatrix(order, d.T @ d)
