"""Financial market model: one riskless bond plus n stocks driven by m Brownian motions.

Coefficients mu(t, w) (excess returns) and sigma(t, w) (volatility matrix) are
functions of time and the Brownian state. The module simulates Brownian and
wealth paths and computes the derived market quantities (Merton proportion,
market price of risk, portfolio return/volatility).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NonpositiveInitialWealth, SingularCovariance

DEFAULT_COND_BOUND = 1e12


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_i = i*T/N on [0, T]."""

    T: float
    N: int

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if self.N < 1:
            raise ValueError(f"step count N must be >= 1, got {self.N}")

    @property
    def dt(self):
        return self.T / self.N

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.N + 1)


@dataclass(frozen=True)
class PathSet:
    """J simulated m-dimensional Brownian paths on a TimeGrid.

    W has shape (J, N+1, m) with W[:, 0] = 0; increments are iid centered
    Gaussians with variance dt per component, reproducible from the seed.
    """

    grid: TimeGrid
    seed: int
    J: int
    m: int
    W: np.ndarray = field(repr=False)

    @property
    def dW(self):
        return np.diff(self.W, axis=1)


@dataclass
class MarketModel:
    """Market coefficients and numerical guards.

    mu(t, w) -> excess returns, shape (n,) for w of shape (m,), or (J, n) for
    a batch w of shape (J, m). sigma(t, w) -> volatility matrix, shape (n, m)
    or (J, n, m) accordingly. cond_bound is the condition-number threshold
    beyond which sigma*sigma' is treated as singular; theta_bound is the
    uniform bound required of the market price of risk on evaluated points.
    """

    n: int
    m: int
    r: float
    mu: callable
    sigma: callable
    cond_bound: float = DEFAULT_COND_BOUND
    theta_bound: float = 1e3

    def __post_init__(self):
        if self.n < 1 or self.m < self.n:
            raise ValueError(f"need 1 <= n <= m, got n={self.n}, m={self.m}")
        if self.r < 0:
            raise ValueError(f"riskless rate must be >= 0, got {self.r}")
        if self.r == 0:
            warnings.warn("riskless rate r = 0: allowed, but money market earns nothing")

    def coefficients(self, t, w):
        """Evaluate (mu, sigma) at (t, w); w may be (m,) or a batch (J, m)."""
        w = np.asarray(w, dtype=float)
        mu = np.asarray(self.mu(t, w), dtype=float)
        sig = np.asarray(self.sigma(t, w), dtype=float)
        if w.ndim == 1:
            mu = mu.reshape(self.n)
            sig = sig.reshape(self.n, self.m)
        else:
            mu = np.broadcast_to(mu, (w.shape[0], self.n)).astype(float)
            sig = np.broadcast_to(sig, (w.shape[0], self.n, self.m)).astype(float)
        return mu, sig


def constant_coefficients(mu_vec, sigma_mat):
    """Coefficient callables for constant mu and sigma."""
    mu_vec = np.atleast_1d(np.asarray(mu_vec, dtype=float))
    sigma_mat = np.atleast_2d(np.asarray(sigma_mat, dtype=float))

    def mu(t, w):
        w = np.asarray(w)
        if w.ndim == 1:
            return mu_vec
        return np.broadcast_to(mu_vec, (w.shape[0],) + mu_vec.shape)

    def sigma(t, w):
        w = np.asarray(w)
        if w.ndim == 1:
            return sigma_mat
        return np.broadcast_to(sigma_mat, (w.shape[0],) + sigma_mat.shape)

    return mu, sigma


def indicator_drift_coefficients(level=1.0, band=(-1.0, 1.0), sigma_value=1.0):
    """1D coefficients with drift level inside the band of the Brownian state.

    mu(t, w) = level * 1_{band}(w), sigma = sigma_value. Only n = m = 1.
    """
    lo, hi = band

    def mu(t, w):
        w = np.asarray(w, dtype=float)
        inside = (w[..., 0] >= lo) & (w[..., 0] <= hi)
        return np.where(inside, level, 0.0)[..., None]

    def sigma(t, w):
        w = np.asarray(w, dtype=float)
        shape = w.shape[:-1] + (1, 1)
        return np.full(shape, sigma_value)

    return mu, sigma


def gram_matrix(sig):
    """sigma * sigma' for a single (n, m) matrix or a batch (..., n, m)."""
    return sig @ np.swapaxes(sig, -1, -2)


def check_gram(G, cond_bound):
    """Raise SingularCovariance when cond(sigma sigma') exceeds the bound."""
    s = np.linalg.svd(G, compute_uv=False)
    smin = s[..., -1]
    smax = s[..., 0]
    bad = (smin <= 0) | (smax > cond_bound * smin)
    if np.any(bad):
        worst = np.max(np.where(smin > 0, smax / np.maximum(smin, 1e-300), np.inf))
        raise SingularCovariance(
            f"sigma*sigma' condition number {worst:.3e} exceeds bound {cond_bound:.3e}"
        )


def merton_proportion(model, t, state):
    """Solve sigma sigma' zeta_M = mu at (t, state)."""
    mu, sig = model.coefficients(t, state)
    G = gram_matrix(sig)
    check_gram(G, model.cond_bound)
    return np.linalg.solve(G, mu[..., None])[..., 0]


def market_price_of_risk(model, t, state):
    """theta = sigma' (sigma sigma')^{-1} mu at (t, state)."""
    mu, sig = model.coefficients(t, state)
    G = gram_matrix(sig)
    check_gram(G, model.cond_bound)
    x = np.linalg.solve(G, mu[..., None])
    return (np.swapaxes(sig, -1, -2) @ x)[..., 0]


def portfolio_stats(zeta, model, t, state):
    """Portfolio rate of return zeta'mu and volatility ||zeta' sigma||."""
    zeta = np.asarray(zeta, dtype=float)
    mu, sig = model.coefficients(t, state)
    zeta_mu = float(zeta @ mu) if mu.ndim == 1 else np.einsum("...i,...i->...", zeta, mu)
    v = zeta @ sig if sig.ndim == 2 else np.einsum("...i,...ij->...j", zeta, sig)
    zeta_sigma = np.linalg.norm(v, axis=-1)
    if np.ndim(zeta_mu) == 0:
        return float(zeta_mu), float(zeta_sigma)
    return zeta_mu, zeta_sigma


def simulate_paths(grid, m, J, seed):
    """Simulate J Brownian paths on the grid; bit-identical for equal inputs."""
    if J < 1:
        raise ValueError(f"path count J must be >= 1, got {J}")
    if m < 1:
        raise ValueError(f"Brownian dimension m must be >= 1, got {m}")
    rng = np.random.default_rng(seed)
    dW = rng.standard_normal((J, grid.N, m)) * np.sqrt(grid.dt)
    W = np.concatenate([np.zeros((J, 1, m)), np.cumsum(dW, axis=1)], axis=1)
    return PathSet(grid=grid, seed=seed, J=J, m=m, W=W)


def wealth_path(model, grid, path, strategy, x0):
    """Wealth along one Brownian path under a per-step strategy.

    Left-endpoint (Euler on the log) discretization of
    X(t) = x0 * exp{ int (r + zeta'mu - ||zeta'sigma||^2 / 2) du + int zeta'sigma dW },
    which keeps X strictly positive. path has shape (N+1, m), strategy (N, n).
    """
    if not x0 > 0:
        raise NonpositiveInitialWealth(f"initial wealth must be > 0, got {x0}")
    path = np.asarray(path, dtype=float)
    strategy = np.asarray(strategy, dtype=float).reshape(grid.N, model.n)
    if not np.all(np.isfinite(strategy)):
        raise ValueError("strategy contains non-finite entries")
    times = grid.times
    dt = grid.dt
    log_incr = np.empty(grid.N)
    for i in range(grid.N):
        mu, sig = model.coefficients(times[i], path[i])
        v = strategy[i] @ sig
        drift = model.r + strategy[i] @ mu - 0.5 * float(v @ v)
        log_incr[i] = drift * dt + float(v @ (path[i + 1] - path[i]))
    X = np.empty(grid.N + 1)
    X[0] = x0
    X[1:] = x0 * np.exp(np.cumsum(log_incr))
    return X


def wealth_terminal(model, paths, policy, x0):
    """Vectorized terminal wealth over a PathSet under a state-feedback policy.

    policy(i, w_batch) -> strategies of shape (J, n) at step i. Returns (J,)
    terminal wealths, using the same left-endpoint log discretization as
    wealth_path.
    """
    if not x0 > 0:
        raise NonpositiveInitialWealth(f"initial wealth must be > 0, got {x0}")
    grid = paths.grid
    times = grid.times
    dt = grid.dt
    log_x = np.full(paths.J, np.log(x0))
    for i in range(grid.N):
        w = paths.W[:, i, :]
        zeta = np.asarray(policy(i, w), dtype=float).reshape(paths.J, model.n)
        mu, sig = model.coefficients(times[i], w)
        v = np.einsum("ji,jik->jk", zeta, sig)
        drift = model.r + np.einsum("ji,ji->j", zeta, mu) - 0.5 * np.einsum("jk,jk->j", v, v)
        log_x += drift * dt + np.einsum("jk,jk->j", v, paths.dW[:, i, :])
    return np.exp(log_x)


def validate_on_grid(model, grid, paths):
    """Check the market-price-of-risk bound and gram conditioning on all grid points.

    Returns the maximum ||theta|| observed; raises SingularCovariance or
    ValueError when a bound is violated.
    """
    max_theta = 0.0
    for i in range(grid.N + 1):
        theta = market_price_of_risk(model, grid.times[i], paths.W[:, i, :])
        max_theta = max(max_theta, float(np.max(np.linalg.norm(theta, axis=-1))))
    if max_theta > model.theta_bound:
        raise ValueError(
            f"market price of risk {max_theta:.3e} exceeds the configured bound "
            f"{model.theta_bound:.3e} on the simulated grid"
        )
    return max_theta
