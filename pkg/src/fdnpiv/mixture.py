"""Truncated Dirichlet-process mixture of Gaussians for the joint error law.

The sampler is the blocked (truncated stick-breaking) Gibbs scheme: component
labels, conjugate normal-inverse-Wishart component draws, Beta stick
fractions and a Gamma update of the concentration parameter. The errors are
bivariate for the instrumental-variable model and univariate for the plain
nonparametric regression; every routine here works for both.

Component labels are 0-based (``0 .. H-1``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        return lambda f: f

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class MixturePrior:
    """Base measure and hyperpriors of the truncated DP mixture.

    ``G0 = N(mu | mu0, Sigma / tau) IW(Sigma | df, scale)`` and
    ``zeta ~ Gamma(a_zeta, rate=b_zeta)``.
    """

    mu0: np.ndarray = field(default_factory=lambda: np.zeros(2))
    tau: float = 0.01
    df: float = 4.0
    scale: np.ndarray = field(default_factory=lambda: np.eye(2))
    a_zeta: float = 2.0
    b_zeta: float = 2.0
    truncation: int = 25

    def __post_init__(self):
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        scale = np.atleast_2d(np.asarray(self.scale, dtype=float))
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "scale", scale)
        d = mu0.shape[0]
        if scale.shape != (d, d):
            raise ValueError(f"scale must be {d}x{d}, got {scale.shape}")
        if not np.allclose(scale, scale.T):
            raise ValueError("scale matrix must be symmetric")
        if np.linalg.eigvalsh(scale).min() <= 0:
            raise ValueError("scale matrix must be positive definite")
        if self.df <= d - 1:
            raise ValueError(f"inverse-Wishart df must exceed {d - 1}, got {self.df}")
        if self.tau <= 0 or self.a_zeta <= 0 or self.b_zeta <= 0:
            raise ValueError("tau, a_zeta and b_zeta must be positive")
        if self.truncation < 1:
            raise ValueError("truncation must be >= 1")

    @property
    def dim(self) -> int:
        return self.mu0.shape[0]

    @classmethod
    def scaled_to(cls, residuals, **overrides) -> "MixturePrior":
        """Default prior with ``scale = diag(var(residuals))``."""
        residuals = np.asarray(residuals, dtype=float)
        if residuals.ndim == 1:
            residuals = residuals[:, None]
        var = residuals.var(axis=0)
        var = np.where(var > 0, var, 1.0)
        d = residuals.shape[1]
        kwargs = dict(mu0=np.zeros(d), scale=np.diag(var))
        kwargs.update(overrides)
        return cls(**kwargs)

    def with_truncation(self, h: int) -> "MixturePrior":
        return replace(self, truncation=h)


@dataclass
class MixtureState:
    means: np.ndarray  # (H, d)
    covs: np.ndarray  # (H, d, d)
    sticks: np.ndarray  # (H,)
    weights: np.ndarray  # (H,)
    labels: np.ndarray  # (N,)
    zeta: float

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_components)

    def occupied(self) -> int:
        return int(np.count_nonzero(self.counts()))

    def marginal_mean(self) -> np.ndarray:
        return self.weights @ self.means

    def copy(self) -> "MixtureState":
        return MixtureState(
            self.means.copy(), self.covs.copy(), self.sticks.copy(),
            self.weights.copy(), self.labels.copy(), self.zeta,
        )


def stick_breaking(v) -> np.ndarray:
    """Map stick fractions to mixture weights.

    The last fraction is forced to one so the weights sum to one exactly.

    >>> stick_breaking([0.5, 0.5, 1.0])
    array([0.5 , 0.25, 0.25])
    """
    v = np.array(v, dtype=float, ndmin=1)
    if np.any(~(v > 0)) or np.any(v > 1):
        raise ValueError("stick fractions must lie in (0, 1]")
    v[-1] = 1.0
    remaining = np.concatenate([[1.0], np.cumprod(1.0 - v[:-1])])
    w = v * remaining
    # absorb rounding into the last weight so the total is exactly one
    w[-1] = max(1.0 - w[:-1].sum(), 0.0) if w.size > 1 else 1.0
    return w


def _as_2d(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return y[:, None] if y.ndim == 1 else y


def log_component_densities(y, means, covs) -> np.ndarray:
    """Gaussian log densities of every row of `y` under every component.

    Returns an ``(N, H)`` array.
    """
    y = _as_2d(y)
    d = y.shape[1]
    chol = np.linalg.cholesky(covs)  # (H, d, d)
    logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
    if d <= 2:
        # explicit quadratic forms; much faster than batched solves for tiny d
        prec = np.linalg.inv(covs)
        dx = y[:, :1] - means[None, :, 0]  # (N, H)
        maha = prec[:, 0, 0] * dx * dx
        if d == 2:
            dy = y[:, 1:2] - means[None, :, 1]
            maha += (2.0 * prec[:, 0, 1]) * dx * dy + prec[:, 1, 1] * dy * dy
    else:
        linv = np.linalg.inv(chol)
        sol = (y[None, :, :] - means[:, None, :]) @ np.swapaxes(linv, 1, 2)
        maha = np.einsum("hnd,hnd->nh", sol, sol)
    return -0.5 * (maha + (logdet + d * _LOG_2PI)[None, :])


def assignment_probabilities(y, weights, means, covs) -> np.ndarray:
    """Posterior label probabilities, normalised in log space."""
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    logp = log_component_densities(y, means, covs) + logw[None, :]
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    p /= p.sum(axis=1, keepdims=True)
    return p


def _inverse_cdf(prob: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(prob, axis=1)
    idx = (cdf < u[:, None] * cdf[:, -1:]).sum(axis=1)
    return np.minimum(idx, prob.shape[1] - 1)


@njit(cache=True)
def _draw_labels(y, logw, means, prec, logdet, u):
    n, d = y.shape
    h = means.shape[0]
    out = np.empty(n, dtype=np.intp)
    logp = np.empty(h)
    diff = np.empty(d)
    for i in range(n):
        top = -np.inf
        for c in range(h):
            for a in range(d):
                diff[a] = y[i, a] - means[c, a]
            q = 0.0
            for a in range(d):
                for b in range(d):
                    q += diff[a] * prec[c, a, b] * diff[b]
            logp[c] = logw[c] - 0.5 * (q + logdet[c])
            if logp[c] > top:
                top = logp[c]
        total = 0.0
        for c in range(h):
            logp[c] = np.exp(logp[c] - top)
            total += logp[c]
        target = u[i] * total
        acc = 0.0
        k = h - 1
        for c in range(h):
            acc += logp[c]
            if acc >= target:
                k = c
                break
        out[i] = k
    return out


def update_assignments(y, state: MixtureState, rng: np.random.Generator) -> np.ndarray:
    """Draw a component label for every residual row.

    Label ``c`` is drawn with probability proportional to
    ``weights[c] * N(y | means[c], covs[c])``, normalised in log space.
    """
    y = _as_2d(y)
    if state.n_components == 1:
        return np.zeros(y.shape[0], dtype=np.intp)
    u = rng.random(y.shape[0])
    with np.errstate(divide="ignore"):
        logw = np.log(state.weights)
    if HAVE_NUMBA:
        chol = np.linalg.cholesky(state.covs)
        logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
        return _draw_labels(np.ascontiguousarray(y), logw, state.means,
                            np.linalg.inv(state.covs), logdet, u)
    prob = assignment_probabilities(y, state.weights, state.means, state.covs)
    return _inverse_cdf(prob, u)


def niw_posterior(y, prior: MixturePrior):
    """Conjugate update of the normal-inverse-Wishart base measure.

    Returns ``(mu_n, tau_n, df_n, scale_n)``; with no rows this is the prior.
    """
    y = _as_2d(y)
    n = y.shape[0]
    if n == 0:
        return prior.mu0.copy(), prior.tau, prior.df, prior.scale.copy()
    ybar = y.mean(axis=0)
    centred = y - ybar
    scatter = centred.T @ centred
    tau_n = prior.tau + n
    mu_n = (prior.tau * prior.mu0 + n * ybar) / tau_n
    dev = (ybar - prior.mu0)[:, None]
    scale_n = prior.scale + scatter + (prior.tau * n / tau_n) * (dev @ dev.T)
    return mu_n, tau_n, prior.df + n, scale_n


def sample_inverse_wishart(df, scale, rng: np.random.Generator) -> np.ndarray:
    """Batched inverse-Wishart draws via the Bartlett decomposition.

    `df` has shape ``(H,)`` and `scale` ``(H, d, d)``; returns ``(H, d, d)``.
    """
    df = np.atleast_1d(np.asarray(df, dtype=float))
    scale = np.asarray(scale, dtype=float)
    if scale.ndim == 2:
        scale = scale[None]
    h, d, _ = scale.shape
    # Sigma^{-1} ~ W(df, scale^{-1});  W = (L A)(L A)'
    chol = np.linalg.cholesky(np.linalg.inv(scale))
    a = np.zeros((h, d, d))
    dof = df[:, None] - np.arange(d)[None, :]
    a[:, np.arange(d), np.arange(d)] = np.sqrt(rng.chisquare(dof))
    tril = np.tril_indices(d, -1)
    if tril[0].size:
        a[:, tril[0], tril[1]] = rng.standard_normal((h, tril[0].size))
    la_inv = np.linalg.inv(chol @ a)
    cov = np.swapaxes(la_inv, 1, 2) @ la_inv
    return 0.5 * (cov + np.swapaxes(cov, 1, 2))


def _is_spd(m: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return False
    return True


def update_components(y, labels, prior: MixturePrior, rng: np.random.Generator):
    """Draw ``(means, covs)`` of every component from its NIW full conditional.

    Empty components are drawn from the base measure.
    """
    y = _as_2d(y)
    h, d = prior.truncation, prior.dim
    mu_n = np.empty((h, d))
    tau_n = np.empty(h)
    df_n = np.empty(h)
    scale_n = np.empty((h, d, d))
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(h + 1))
    for c in range(h):
        rows = y[order[bounds[c] : bounds[c + 1]]]
        mu_n[c], tau_n[c], df_n[c], scale_n[c] = niw_posterior(rows, prior)
    covs = sample_inverse_wishart(df_n, scale_n, rng)
    for c in range(h):
        if not _is_spd(covs[c]):
            covs[c] += 1e-8 * np.eye(d)
            if not _is_spd(covs[c]):
                raise np.linalg.LinAlgError(f"component {c} covariance draw is not SPD")
    chol = np.linalg.cholesky(covs / tau_n[:, None, None])
    means = mu_n + np.einsum("hij,hj->hi", chol, rng.standard_normal((h, d)))
    return means, covs


def update_sticks_and_concentration(labels, prior: MixturePrior, zeta: float,
                                    rng: np.random.Generator):
    """Draw stick fractions, recompute weights, then draw the concentration.

    ``v_c ~ Beta(1 + n_c, zeta + sum_{j>c} n_j)`` with ``v_H = 1``, and
    ``zeta ~ Gamma(a + H - 1, rate = b - sum_{c<H} log(1 - v_c))``.
    """
    h = prior.truncation
    counts = np.bincount(labels, minlength=h).astype(float)
    tail = np.concatenate([np.cumsum(counts[::-1])[::-1][1:], [0.0]])
    v = np.ones(h)
    if h > 1:
        v[:-1] = rng.beta(1.0 + counts[:-1], zeta + tail[:-1])
        v[:-1] = np.clip(v[:-1], 1e-300, 1.0 - 1e-12)
        rate = prior.b_zeta - np.log1p(-v[:-1]).sum()
        zeta = rng.gamma(prior.a_zeta + h - 1, 1.0 / rate)
    return v, stick_breaking(v), float(zeta)


def conditional_shift(eps1, mean, cov):
    """Mean and variance of the second error given the first.

    Works for a single component (``mean`` shape ``(2,)``) or per
    observation (``mean`` shape ``(N, 2)``, ``cov`` shape ``(N, 2, 2)``).
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    s11 = cov[..., 0, 0]
    s12 = cov[..., 0, 1]
    s22 = cov[..., 1, 1]
    slope = s12 / s11
    cmean = mean[..., 1] + slope * (np.asarray(eps1, dtype=float) - mean[..., 0])
    cvar = s22 - s12 * slope
    return cmean, cvar


def mixture_density(points, weights, means, covs) -> np.ndarray:
    """Density of the finite mixture at each row of `points`."""
    logp = log_component_densities(points, means, covs)
    with np.errstate(divide="ignore"):
        logp = logp + np.log(weights)[None, :]
    return np.exp(logsumexp(logp, axis=1))


def initial_state(n: int, prior: MixturePrior, cov0, rng: np.random.Generator,
                  zeta: float = 1.0) -> MixtureState:
    """All rows in component 0, which sits at the origin with covariance `cov0`."""
    h, d = prior.truncation, prior.dim
    labels = np.zeros(n, dtype=np.intp)
    means, covs = update_components(np.empty((0, d)), np.empty(0, dtype=np.intp), prior, rng)
    means[0] = 0.0
    covs[0] = np.atleast_2d(cov0)
    v, w, _ = update_sticks_and_concentration(labels, prior, zeta, rng)
    return MixtureState(means, covs, v, w, labels, zeta)
