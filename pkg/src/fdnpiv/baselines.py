"""Parametric comparators (pooled OLS, 2SLS) and first-stage F diagnostics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .ingest import RegressionSample

F_CRITICAL = 10.0
MIN_BIN_ROWS = 30


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class PolySpec:
    """Polynomial in one covariate.

    ``powers`` overrides ``degree`` to select specific terms, e.g.
    ``PolySpec(4, powers=(3, 4))`` for ``b0 + b3 x^3 + b4 x^4``.
    """

    degree: int = 2
    intercept: bool = True
    powers: tuple | None = None

    def __post_init__(self):
        if not 1 <= self.degree <= 6:
            raise ValueError(f"polynomial degree must be in 1..6, got {self.degree}")
        if self.powers is not None:
            p = tuple(int(k) for k in self.powers)
            if not p or min(p) < 1 or max(p) > 6:
                raise ValueError("powers must lie in 1..6")
            object.__setattr__(self, "powers", p)
            object.__setattr__(self, "degree", max(p))

    @property
    def terms(self) -> tuple:
        return self.powers if self.powers is not None else tuple(range(1, self.degree + 1))

    @property
    def n_params(self) -> int:
        return len(self.terms) + int(self.intercept)

    def names(self) -> list:
        return (["const"] if self.intercept else []) + [f"x^{k}" for k in self.terms]

    def design(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        cols = [np.ones_like(x)] if self.intercept else []
        cols += [x ** k for k in self.terms]
        return np.column_stack(cols)


@dataclass
class PolyFit:
    spec: PolySpec
    coef: np.ndarray
    se: np.ndarray
    grid: np.ndarray
    fitted: np.ndarray
    first_stage_f: np.ndarray | None = None
    weak_instrument: bool = False

    def predict(self, x) -> np.ndarray:
        return self.spec.design(x) @ self.coef

    def as_dict(self) -> dict:
        return dict(zip(self.spec.names(), self.coef.tolist()))


def _lstsq(X, y):
    cond = np.linalg.cond(X)
    if not np.isfinite(cond) or cond > 1e12 or np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficientError(f"rank-deficient design (condition number {cond:.3g})")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return coef


def _grid(x, grid, n=200):
    return np.linspace(np.min(x), np.max(x), n) if grid is None else np.asarray(grid, float)


def fit_pols(sample: RegressionSample, spec: PolySpec = PolySpec(), grid=None) -> PolyFit:
    """Least-squares polynomial regression of ``q`` on ``o``."""
    q, o = np.asarray(sample.q, float), np.asarray(sample.o, float)
    if q.shape[0] <= spec.n_params:
        raise ValueError("not enough observations for the polynomial")
    X = spec.design(o)
    coef = _lstsq(X, q)
    resid = q - X @ coef
    sigma2 = resid @ resid / (q.shape[0] - X.shape[1])
    se = np.sqrt(np.diag(sigma2 * np.linalg.inv(X.T @ X)))
    g = _grid(o, grid)
    return PolyFit(spec, coef, se, g, spec.design(g) @ coef)


def fit_2sls(sample: RegressionSample, spec: PolySpec = PolySpec(), grid=None,
             critical: float = F_CRITICAL) -> PolyFit:
    """Two-stage least squares with polynomial terms of ``z`` as instruments.

    Every polynomial term of ``o`` is projected on ``1, z, ..., z^degree``;
    ``q`` is then regressed on the projections. Standard errors use the
    structural residuals ``q - X b``.
    """
    q, o, z = (np.asarray(a, float) for a in (sample.q, sample.o, sample.z))
    inst = PolySpec(spec.degree, intercept=True)
    if q.shape[0] <= 2 * (spec.degree + 1):
        raise ValueError("not enough observations for 2SLS")
    X = spec.design(o)
    Z = inst.design(z)
    first = np.column_stack([_lstsq(Z, X[:, j]) for j in range(X.shape[1])])
    Xhat = Z @ first
    coef = _lstsq(Xhat, q)
    resid = q - X @ coef
    sigma2 = resid @ resid / (q.shape[0] - X.shape[1])
    se = np.sqrt(np.diag(sigma2 * np.linalg.inv(Xhat.T @ Xhat)))

    # per-term first-stage F (joint irrelevance of the non-constant instruments)
    k = Z.shape[1] - 1
    n = q.shape[0]
    fstats = []
    for j in range(int(spec.intercept), X.shape[1]):
        x = X[:, j]
        rss1 = np.sum((x - Xhat[:, j]) ** 2)
        rss0 = np.sum((x - x.mean()) ** 2)
        fstats.append(((rss0 - rss1) / k) / (rss1 / (n - k - 1)))
    fstats = np.array(fstats)
    weak = bool(np.any(fstats < critical))
    if weak:
        warnings.warn(f"weak first stage: min F = {fstats.min():.3g} < {critical:g}",
                      RuntimeWarning, stacklevel=2)
    g = _grid(o, grid)
    return PolyFit(spec, coef, se, g, spec.design(g) @ coef, fstats, weak)


@dataclass
class FTestRow:
    label: str
    lo: float
    hi: float
    n: int
    f: float | None
    r2: float | None
    note: str = ""

    def as_dict(self) -> dict:
        return {"bin": self.label, "lower": self.lo, "upper": self.hi, "n": self.n,
                "F": self.f, "R2": self.r2, "note": self.note}


@dataclass
class FTestReport:
    rows: list = field(default_factory=list)
    critical: float = F_CRITICAL

    @property
    def all_strong(self) -> bool:
        return all(r.f is not None and r.f > self.critical for r in self.rows)

    def as_dict(self) -> dict:
        return {"critical_value": self.critical, "all_above_critical": self.all_strong,
                "bins": [r.as_dict() for r in self.rows]}


def first_stage_f(o, z):
    """F statistic and R^2 of the linear regression of ``o`` on ``1, z``."""
    o, z = np.asarray(o, float), np.asarray(z, float)
    n = o.shape[0]
    zc = z - z.mean()
    oc = o - o.mean()
    sxx = zc @ zc
    if sxx == 0:
        return 0.0, 0.0
    slope = (zc @ oc) / sxx
    rss1 = np.sum((oc - slope * zc) ** 2)
    rss0 = oc @ oc
    r2 = 1.0 - rss1 / rss0 if rss0 > 0 else 0.0
    if rss1 == 0:
        return np.inf, r2
    return (rss0 - rss1) / (rss1 / (n - 2)), r2


def default_bins(split: float = 15.0):
    return [(-np.inf, split), (split, np.inf)]


def _bin_label(lo, hi):
    if np.isinf(lo) and np.isinf(hi):
        return "full"
    if np.isinf(lo):
        return f"IV <= {hi:g}"
    if np.isinf(hi):
        return f"IV > {lo:g}"
    return f"{lo:g} < IV <= {hi:g}"


def weak_instrument_ftest(sample: RegressionSample, bins=None,
                          critical: float = F_CRITICAL) -> FTestReport:
    """First-stage F tests on the full instrument support and within bins.

    A bin ``(lo, hi)`` holds rows with ``lo < z <= hi`` (the first bin also
    takes ``z == lo``). Bins with fewer than 30 rows are reported but not
    tested.
    """
    o, z = np.asarray(sample.o, float), np.asarray(sample.z, float)
    bins = default_bins() if bins is None else bins
    report = FTestReport(critical=critical)
    f, r2 = first_stage_f(o, z)
    report.rows.append(FTestRow("full", -np.inf, np.inf, len(z), float(f), float(r2)))
    tested = 0
    for i, (lo, hi) in enumerate(bins):
        mask = (z > lo) & (z <= hi)
        if i == 0:
            mask |= z == lo
        label = _bin_label(lo, hi)
        n = int(mask.sum())
        if n < MIN_BIN_ROWS:
            report.rows.append(FTestRow(label, lo, hi, n, None, None,
                                        f"skipped: fewer than {MIN_BIN_ROWS} rows"))
            continue
        f, r2 = first_stage_f(o[mask], z[mask])
        report.rows.append(FTestRow(label, lo, hi, n, float(f), float(r2)))
        tested += 1
    if bins and tested == 0:
        raise ValueError("every instrument bin has fewer than 30 rows")
    return report


def bins_from_edges(edges) -> list:
    """``[15]`` -> ``[(-inf, 15), (15, inf)]``."""
    e = [-np.inf, *sorted(float(x) for x in edges), np.inf]
    return list(zip(e[:-1], e[1:]))
