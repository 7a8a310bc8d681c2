"""Gibbs samplers for Bayesian nonparametric (IV) regression.

``fit_npiv`` fits the simultaneous system

    q = S(o) + e2,    o = h(z) + e1,

with P-spline priors on ``S`` and ``h`` and a truncated DP mixture of
bivariate Gaussians on ``(e1, e2)``. Conditioning on the mixture labels turns
each equation into a heteroskedastic Gaussian regression whose response is
corrected by the other equation's error (the control-function term), so both
coefficient blocks have closed-form Gaussian full conditionals.

``fit_np`` is the same machinery with the first stage switched off (no
instrument, univariate error mixture).
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import mixture as mx
from .ingest import RegressionSample
from .splines import KnotVector, design_matrix, make_knots, penalty

log = logging.getLogger(__name__)

GRID_SIZE = 200


@dataclass(frozen=True)
class McmcConfig:
    total: int = 5000
    burnin: int = 1000
    thin: int = 4
    seed: int = 0
    delta: float = 0.05

    def __post_init__(self):
        if not 0 <= self.burnin < self.total:
            raise ValueError("burn-in must be non-negative and smaller than total draws")
        if self.thin < 1:
            raise ValueError("thinning must be >= 1")
        if not 0 < self.delta < 1:
            raise ValueError("band level delta must lie in (0, 1)")
        if self.retained < 100:
            raise ValueError(f"configuration retains only {self.retained} draws (< 100)")

    @property
    def retained(self) -> int:
        return (self.total - self.burnin) // self.thin

    def keeps(self, iteration: int) -> bool:
        """Whether 1-based `iteration` is a retained draw."""
        k = iteration - self.burnin
        return k > 0 and k % self.thin == 0

    @classmethod
    def full(cls, seed: int = 0, **kw) -> "McmcConfig":
        """Real-data profile: 50,000 draws, 15,000 burn-in, every 10th kept."""
        return cls(50_000, 15_000, 10, seed, **kw)

    @classmethod
    def desk(cls, seed: int = 0, **kw) -> "McmcConfig":
        return cls(5_000, 1_000, 4, seed, **kw)

    @classmethod
    def monte_carlo(cls, seed: int = 0, **kw) -> "McmcConfig":
        """Simulation-study profile: 40,000 draws, 10,000 burn-in, every 40th kept."""
        return cls(40_000, 10_000, 40, seed, **kw)


@dataclass(frozen=True)
class SplinePriors:
    """Inverse-Gamma hyperprior on the smoothing variances plus a diffuse ridge."""

    a_tau: float = 1.0
    b_tau: float = 0.005
    coef_var: float = 1e8
    penalty_order: int = 2

    def __post_init__(self):
        if self.a_tau <= 0 or self.b_tau <= 0:
            raise ValueError("a_tau and b_tau must be positive")
        if self.coef_var <= 0:
            raise ValueError("coef_var must be positive")


@dataclass
class PosteriorDraws:
    """Retained MCMC output of one chain.

    Curves are stored evaluated on ``grid`` (second stage) and ``grid_h``
    (first stage). Per-observation residuals are kept as their posterior
    mean, since storing every draw is ``O(draws x N)``.
    """

    config: McmcConfig
    knots: KnotVector
    grid: np.ndarray
    beta: np.ndarray
    curves: np.ndarray
    tau2: np.ndarray
    zeta: np.ndarray
    n_occupied: np.ndarray
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    residual_mean: np.ndarray
    knots_h: KnotVector | None = None
    grid_h: np.ndarray | None = None
    gamma: np.ndarray | None = None
    curves_h: np.ndarray | None = None
    instrumented: bool = True
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.beta.shape[0]

    def curve_samples(self, which: str = "S"):
        """``(grid, samples)`` for the second-stage (``"S"``) or first-stage (``"h"``) curve."""
        if which == "S":
            return self.grid, self.curves
        if which == "h":
            if self.curves_h is None:
                raise ValueError("no first-stage curve in a non-instrumented fit")
            return self.grid_h, self.curves_h
        raise ValueError(f"unknown curve {which!r}")

    def evaluate(self, x, which: str = "S") -> np.ndarray:
        """Evaluate every retained curve at new points, shape ``(draws, len(x))``."""
        if which == "S":
            return self.beta @ design_matrix(self.knots, x).T
        if self.gamma is None:
            raise ValueError("no first-stage curve in a non-instrumented fit")
        return self.gamma @ design_matrix(self.knots_h, x).T


def coefficient_conditional(X, y, noise_var, prior_prec):
    """Gaussian full conditional of ``b`` in ``y = X b + e``, ``e ~ N(0, diag(noise_var))``.

    Returns the posterior mean and the Cholesky factor of the posterior
    precision. A failed factorisation is retried once with a 1e-8 ridge.
    """
    w = 1.0 / np.asarray(noise_var, dtype=float)
    if w.ndim == 0:
        w = np.full(X.shape[0], float(w))
    prec = X.T @ (X * w[:, None]) + prior_prec
    rhs = X.T @ (w * y)
    try:
        chol = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError:
        warnings.warn("singular penalised cross-product; adding 1e-8 ridge", RuntimeWarning,
                      stacklevel=2)
        chol = np.linalg.cholesky(prec + 1e-8 * np.eye(prec.shape[0]))
    mean = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
    return mean, chol


def _draw(mean, chol, rng):
    return mean + np.linalg.solve(chol.T, rng.standard_normal(mean.shape[0]))


def _penalised_ls(X, y, K, ridge):
    return np.linalg.solve(X.T @ X + K + ridge * np.eye(X.shape[1]), X.T @ y)


def _grid(x, n=GRID_SIZE):
    return np.linspace(np.min(x), np.max(x), n)


class _Chain:
    """Mutable state of one Gibbs chain; ``sweep`` advances it by one iteration."""

    def __init__(self, q, o, z, kv_s, kv_h, spline_priors, mix_prior, rng,
                 instrumented=True, truncation=25):
        self.q, self.o, self.z = q, o, z
        self.rng = rng
        self.instrumented = instrumented
        self.sp = spline_priors
        self.Bo = design_matrix(kv_s, o)
        self.K_s = penalty(kv_s.dimension, spline_priors.penalty_order)
        ridge = 1.0 / spline_priors.coef_var
        self.ridge_s = ridge * np.eye(kv_s.dimension)
        self.beta = _penalised_ls(self.Bo, q, self.K_s.matrix, ridge)
        self.eps2 = q - self.Bo @ self.beta
        if instrumented:
            self.Bz = design_matrix(kv_h, z)
            self.K_h = penalty(kv_h.dimension, spline_priors.penalty_order)
            self.ridge_h = ridge * np.eye(kv_h.dimension)
            self.gamma = _penalised_ls(self.Bz, o, self.K_h.matrix, ridge)
            self.eps1 = o - self.Bz @ self.gamma
            resid = np.column_stack([self.eps1, self.eps2])
            self.tau2 = np.ones(2)
        else:
            self.gamma = None
            self.eps1 = None
            resid = self.eps2[:, None]
            self.tau2 = np.ones(1)
        if mix_prior is None:
            mix_prior = mx.MixturePrior.scaled_to(self._ls_residuals(ridge),
                                                   truncation=truncation)
        if mix_prior.dim != resid.shape[1]:
            raise ValueError(f"mixture prior has dimension {mix_prior.dim}, "
                             f"errors have dimension {resid.shape[1]}")
        self.prior = mix_prior
        cov0 = np.cov(resid, rowvar=False).reshape(resid.shape[1], resid.shape[1])
        self.mix = mx.initial_state(q.shape[0], mix_prior, cov0, rng)
        self.iteration = 0

    def _ls_residuals(self, ridge):
        # unpenalised fit: the prior scale must not depend on the units of the penalty
        zero = np.zeros((self.Bo.shape[1],) * 2)
        r2 = self.q - self.Bo @ _penalised_ls(self.Bo, self.q, zero, ridge)
        if not self.instrumented:
            return r2[:, None]
        zero = np.zeros((self.Bz.shape[1],) * 2)
        r1 = self.o - self.Bz @ _penalised_ls(self.Bz, self.o, zero, ridge)
        return np.column_stack([r1, r2])

    @property
    def residuals(self) -> np.ndarray:
        if self.instrumented:
            return np.column_stack([self.eps1, self.eps2])
        return self.eps2[:, None]

    def _check(self, block, *arrays):
        for a in arrays:
            if not np.all(np.isfinite(a)):
                raise FloatingPointError(
                    f"non-finite values at iteration {self.iteration}, block '{block}'")

    def _prior_prec(self, K, tau2, ridge):
        return K.matrix / tau2 + ridge

    def update_first_stage(self):
        mix = self.mix
        lab = mix.labels
        mu = mix.means[lab][:, ::-1]
        cov = mix.covs[lab][:, ::-1, ::-1]
        # e1 | e2 under each observation's component
        cmean, cvar = mx.conditional_shift(self.eps2, mu, cov)
        mean, chol = coefficient_conditional(
            self.Bz, self.o - cmean, cvar,
            self._prior_prec(self.K_h, self.tau2[0], self.ridge_h))
        self.gamma = _draw(mean, chol, self.rng)
        self.eps1 = self.o - self.Bz @ self.gamma
        self._check("first stage", self.gamma)

    def update_second_stage(self):
        mix = self.mix
        lab = mix.labels
        if self.instrumented:
            cmean, cvar = mx.conditional_shift(self.eps1, mix.means[lab], mix.covs[lab])
        else:
            cmean = mix.means[lab, 0]
            cvar = mix.covs[lab, 0, 0]
        mean, chol = coefficient_conditional(
            self.Bo, self.q - cmean, cvar,
            self._prior_prec(self.K_s, self.tau2[-1], self.ridge_s))
        self.beta = _draw(mean, chol, self.rng)
        self.eps2 = self.q - self.Bo @ self.beta
        self._check("second stage", self.beta)

    def update_mixture(self):
        resid = self.residuals
        mix = self.mix
        mix.labels = mx.update_assignments(resid, mix, self.rng)
        mix.means, mix.covs = mx.update_components(resid, mix.labels, self.prior, self.rng)
        mix.sticks, mix.weights, mix.zeta = mx.update_sticks_and_concentration(
            mix.labels, self.prior, mix.zeta, self.rng)
        self._check("mixture", mix.means, mix.covs)

    def update_smoothing(self):
        sp = self.sp
        coefs = [self.gamma, self.beta] if self.instrumented else [self.beta]
        pens = [self.K_h, self.K_s] if self.instrumented else [self.K_s]
        for j, (b, K) in enumerate(zip(coefs, pens)):
            shape = sp.a_tau + 0.5 * K.rank
            rate = sp.b_tau + 0.5 * b @ K.matrix @ b
            self.tau2[j] = 1.0 / self.rng.gamma(shape, 1.0 / rate)

    def recentre(self):
        # B-spline rows sum to one, so a constant shift of the coefficients
        # shifts the curve by the same constant.
        m = self.mix.marginal_mean()
        self.mix.means -= m
        if self.instrumented:
            self.gamma += m[0]
            self.eps1 -= m[0]
        self.beta += m[-1]
        self.eps2 -= m[-1]

    def sweep(self):
        self.iteration += 1
        if self.instrumented:
            self.update_first_stage()
        self.update_second_stage()
        self.update_mixture()
        self.update_smoothing()
        self.recentre()


def _fit(sample, knots, spline_priors, mix_prior, cfg, instrumented, truncation=25):
    spline_priors = spline_priors or SplinePriors()
    cfg = cfg or McmcConfig.desk()
    q = np.asarray(sample.q, dtype=float)
    o = np.asarray(sample.o, dtype=float)
    z = np.asarray(sample.z, dtype=float) if instrumented else None
    if knots is None:
        kv_s = make_knots(o)
        kv_h = make_knots(z) if instrumented else None
    elif isinstance(knots, KnotVector):
        kv_s, kv_h = knots, (make_knots(z) if instrumented else None)
    else:
        kv_s, kv_h = knots
        if instrumented and kv_h is None:
            kv_h = make_knots(z)
    n_basis = kv_s.dimension + (kv_h.dimension if instrumented else 0)
    if q.shape[0] < 10 * n_basis:
        warnings.warn(f"only {q.shape[0]} observations for {n_basis} basis functions",
                      RuntimeWarning, stacklevel=3)

    rng = np.random.default_rng(cfg.seed)
    chain = _Chain(q, o, z, kv_s, kv_h, spline_priors, mix_prior, rng, instrumented,
                   truncation)
    grid = _grid(o)
    G_s = design_matrix(kv_s, grid)
    grid_h = _grid(z) if instrumented else None
    G_h = design_matrix(kv_h, grid_h) if instrumented else None

    m, h, d = cfg.retained, chain.prior.truncation, chain.prior.dim
    out = dict(
        beta=np.empty((m, kv_s.dimension)),
        tau2=np.empty((m, chain.tau2.size)),
        zeta=np.empty(m),
        n_occupied=np.empty(m, dtype=int),
        weights=np.empty((m, h)),
        means=np.empty((m, h, d)),
        covs=np.empty((m, h, d, d)),
    )
    gammas = np.empty((m, kv_h.dimension)) if instrumented else None
    resid_sum = np.zeros((q.shape[0], d))
    k = 0
    for it in range(1, cfg.total + 1):
        chain.sweep()
        if cfg.keeps(it):
            out["beta"][k] = chain.beta
            out["tau2"][k] = chain.tau2
            out["zeta"][k] = chain.mix.zeta
            out["n_occupied"][k] = chain.mix.occupied()
            out["weights"][k] = chain.mix.weights
            out["means"][k] = chain.mix.means
            out["covs"][k] = chain.mix.covs
            if instrumented:
                gammas[k] = chain.gamma
            resid_sum += chain.residuals
            k += 1
        if it % 1000 == 0:
            log.debug("iteration %d/%d, %d occupied components", it, cfg.total,
                      chain.mix.occupied())
    curves = out["beta"] @ G_s.T
    curves_h = gammas @ G_h.T if instrumented else None
    if not np.all(np.isfinite(curves)):
        raise FloatingPointError("non-finite curve evaluations in retained draws")
    return PosteriorDraws(
        config=cfg, knots=kv_s, grid=grid, curves=curves,
        residual_mean=resid_sum / m, knots_h=kv_h, grid_h=grid_h, gamma=gammas,
        curves_h=curves_h, instrumented=instrumented,
        diagnostics={"prior_scale": chain.prior.scale.tolist()},
        **out,
    )


def fit_npiv(sample: RegressionSample, knots=None, spline_priors: SplinePriors | None = None,
             mixture_prior: mx.MixturePrior | None = None,
             cfg: McmcConfig | None = None, truncation: int = 25) -> PosteriorDraws:
    """Fit the instrumented system ``q = S(o) + e2, o = h(z) + e1``.

    Parameters
    ----------
    sample : RegressionSample
        Response ``q``, endogenous covariate ``o`` and instrument ``z``.
    knots : tuple of KnotVector, optional
        ``(knots for S, knots for h)``. Defaults to 20 equidistant interior
        knots of cubic splines over each covariate's range.
    spline_priors : SplinePriors, optional
    mixture_prior : MixturePrior, optional
        Defaults to ``MixturePrior.scaled_to`` the residuals of an initial
        unpenalised least-squares pass.
    cfg : McmcConfig, optional
        Defaults to the desk profile.
    truncation : int
        Number of mixture components when `mixture_prior` is not given.

    Returns
    -------
    PosteriorDraws
    """
    return _fit(sample, knots, spline_priors, mixture_prior, cfg, True, truncation)


def fit_np(sample: RegressionSample, knots=None, spline_priors: SplinePriors | None = None,
           mixture_prior: mx.MixturePrior | None = None,
           cfg: McmcConfig | None = None, truncation: int = 25) -> PosteriorDraws:
    """Fit ``q = S(o) + e2`` ignoring the instrument (DP mixture on ``e2`` only)."""
    if isinstance(knots, tuple):
        knots = knots[0]
    return _fit(sample, knots, spline_priors, mixture_prior, cfg, False, truncation)


def write_draws_csv(draws: PosteriorDraws, path, which: str = "S") -> None:
    """One row per retained draw and grid point: ``draw_index, grid_value, S_value``."""
    grid, samples = draws.curve_samples(which)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["draw_index", "grid_value", f"{which}_value"])
        for i, row in enumerate(samples):
            for g, v in zip(grid, row):
                writer.writerow([i, repr(float(g)), repr(float(v))])
