"""Distortion risk measures and the closed-form risk functional.

Freezing strategy and coefficients over a horizon tau, the relative wealth
loss is distributed as L = 1 - exp(G) where G is normal with mean
m = (r + x - y^2/2) tau and standard deviation s = y sqrt(tau); here x is the
portfolio rate of return and y >= 0 the portfolio volatility. A distortion
risk measure applies rho(L) = int_[0,1] F_L^{-1}(u) dD(u) for a distortion D
(right-continuous, increasing, D(0)=0, D(1)=1).

Quantile orientation: inverting the CDF of L gives
    F_L^{-1}(u) = 1 - exp(m + s * N^{-1}(1 - u)),
i.e. the standard-normal quantile enters at 1 - u, not u. Presentations that
write N^{-1}(u) inside the distortion integral disagree with
rho(L) = int F_L^{-1}(u) dD(u) evaluated on this loss law; the Monte Carlo
oracle (mc_loss_risk_oracle) pins the (1 - u) orientation used here.

Closed forms (alpha the tail level, Phi the standard normal CDF):
    VaR_alpha  = 1 - exp(m + s * Phi^{-1}(alpha))
    TVaR_alpha = 1 - exp((r + x) tau) * Phi(Phi^{-1}(alpha) - s) / alpha
    LEL_alpha  = TVaR_alpha with the return term x set to 0 (risk-neutral drift)
Generic distortions are integrated by adaptive Gauss-Legendre panels against
D with endpoint-atom handling.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DegenerateDistortion, QuadratureFailure
from .market import portfolio_stats

_GRID_CHECK_POINTS = 10_000
_ENDPOINT_EPS = 1e-10

# 3-point Gauss-Legendre on [0, 1]
_GL_NODES = np.array([0.5 - np.sqrt(15) / 10, 0.5, 0.5 + np.sqrt(15) / 10])
_GL_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0


@dataclass(frozen=True)
class Distortion:
    """Distortion function D on [0, 1]; kind in {var, tvar, lel, generic}."""

    kind: str
    alpha: float = None
    D: callable = None

    @classmethod
    def var(cls, alpha):
        _check_alpha(alpha)
        return cls(kind="var", alpha=alpha)

    @classmethod
    def tvar(cls, alpha):
        _check_alpha(alpha)
        return cls(kind="tvar", alpha=alpha)

    @classmethod
    def lel(cls, alpha):
        _check_alpha(alpha)
        return cls(kind="lel", alpha=alpha)

    @classmethod
    def generic(cls, D):
        u = np.linspace(0.0, 1.0, _GRID_CHECK_POINTS)
        vals = np.asarray(D(u), dtype=float)
        if vals.shape != u.shape:
            raise DegenerateDistortion("generic distortion must map arrays elementwise")
        if abs(vals[0]) > 1e-9 or abs(vals[-1] - 1.0) > 1e-9:
            raise DegenerateDistortion(
                f"generic distortion must satisfy D(0)=0, D(1)=1; got D(0)={vals[0]:.3e}, "
                f"D(1)={vals[-1]:.6f}"
            )
        if np.any(np.diff(vals) < -1e-12):
            raise DegenerateDistortion("generic distortion is decreasing somewhere on [0, 1]")
        return cls(kind="generic", D=D)

    def weights(self, u):
        """D evaluated at u (vectorized). LEL reuses the TVaR distortion."""
        u = np.asarray(u, dtype=float)
        if self.kind == "var":
            return (u >= 1.0 - self.alpha).astype(float)
        if self.kind in ("tvar", "lel"):
            return np.clip((u - (1.0 - self.alpha)) / self.alpha, 0.0, 1.0)
        return np.asarray(self.D(u), dtype=float)


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"tail level alpha must lie in (0, 1), got {alpha}")


@dataclass(frozen=True)
class RiskParams:
    """Rate, measurement horizon and distortion defining the risk functional."""

    r: float
    tau: float
    distortion: Distortion

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"measurement horizon tau must be > 0, got {self.tau}")


def risk_functional(x, y, params):
    """Risk of the projected loss for portfolio return x and volatility y >= 0.

    Vectorized over broadcastable x, y for the var/tvar/lel kinds; generic
    distortions are integrated pointwise by adaptive quadrature.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("portfolio volatility y must be >= 0")
    r, tau, dist = params.r, params.tau, params.distortion
    s = y * np.sqrt(tau)
    if dist.kind == "var":
        m = (r + x - 0.5 * y**2) * tau
        out = 1.0 - np.exp(m + s * ndtri(dist.alpha))
    elif dist.kind == "tvar":
        out = 1.0 - np.exp((r + x) * tau) * ndtr(ndtri(dist.alpha) - s) / dist.alpha
    elif dist.kind == "lel":
        out = 1.0 - np.exp(r * tau) * ndtr(ndtri(dist.alpha) - s) / dist.alpha
    else:
        m = (r + x - 0.5 * y**2) * tau
        out = np.vectorize(lambda mm, ss: _generic_value(mm, ss, dist.D))(m, s)
    if out.ndim == 0:
        return float(out)
    return out


def rho_of_strategy(zeta, model, t, state, params):
    """Risk of holding zeta constant over the horizon: the composition contract."""
    zeta_mu, zeta_sigma = portfolio_stats(zeta, model, t, state)
    return risk_functional(zeta_mu, zeta_sigma, params)


def mc_loss_risk_oracle(zeta_mu, zeta_sigma, params, n_samples, seed):
    """Monte Carlo estimate of the distortion risk of the projected loss.

    Samples the normal exponent, sorts the empirical losses and integrates the
    empirical quantile function against D as a Riemann-Stieltjes sum (for VaR
    this collapses to the empirical quantile, for TVaR to the fractional tail
    average). Converges to risk_functional at rate O(n_samples^{-1/2}).
    """
    if n_samples < 1_000:
        raise ValueError(f"need n_samples >= 1000, got {n_samples}")
    if zeta_sigma < 0:
        raise ValueError("portfolio volatility must be >= 0")
    r, tau, dist = params.r, params.tau, params.distortion
    x = 0.0 if dist.kind == "lel" else zeta_mu
    m = (r + x - 0.5 * zeta_sigma**2) * tau
    s = zeta_sigma * np.sqrt(tau)
    rng = np.random.default_rng(seed)
    losses = 1.0 - np.exp(m + s * rng.standard_normal(n_samples))
    losses.sort()
    grid = np.arange(n_samples + 1) / n_samples
    w = np.diff(dist.weights(grid))
    return float(w @ losses)


def _generic_value(m, s, D, tol=1e-8):
    """int [1 - exp(m + s N^{-1}(1-u))] dD(u) by adaptive Stieltjes panels."""
    eps = _ENDPOINT_EPS

    def g(u):
        return 1.0 - np.exp(m + s * ndtri(1.0 - u))

    atom0 = float(D(eps)) - float(D(0.0))
    atom1 = float(D(1.0)) - float(D(1.0 - eps))
    if s > 0 and atom0 > 1e-6:
        raise DegenerateDistortion(
            "distortion places mass near u=0 beyond the quadrature resolution; "
            "the loss quantile diverges there"
        )
    g_at_1 = 1.0 if s > 0 else 1.0 - np.exp(m)
    # mass below eps is attributed to the endpoint value g(eps)
    total = atom1 * g_at_1 + atom0 * float(g(eps))
    return total + _adaptive_stieltjes(g, D, eps, 1.0 - eps, tol)


def _panel(g, dD, a, b):
    u = a + (b - a) * _GL_NODES
    return dD * float(_GL_WEIGHTS @ g(u))


def _adaptive_stieltjes(g, D, a, b, tol, max_depth=52):
    """Adaptive panel integration of g against dD on [a, b].

    Each panel treats D as linear and applies 3-point Gauss-Legendre to g;
    panels are split until the coarse/fine estimates agree. Converges for
    continuous g even across jumps of D (the jump panel shrinks onto the jump
    location).
    """
    total = 0.0
    Da, Db = float(D(a)), float(D(b))
    stack = [(a, b, Da, Db, _panel(g, Db - Da, a, b), 0)]
    while stack:
        lo, hi, Dlo, Dhi, coarse, depth = stack.pop()
        if Dhi - Dlo < -1e-12:
            raise DegenerateDistortion("distortion is decreasing inside the integration range")
        mid = 0.5 * (lo + hi)
        Dmid = float(D(mid))
        left = _panel(g, Dmid - Dlo, lo, mid)
        right = _panel(g, Dhi - Dmid, mid, hi)
        err = abs(coarse - (left + right))
        if err <= tol * max(Dhi - Dlo, hi - lo) or hi - lo < 1e-14:
            total += left + right
            continue
        if depth >= max_depth:
            raise QuadratureFailure(
                f"distortion quadrature did not converge on [{lo:.3e}, {hi:.3e}] "
                f"(panel error {err:.3e})"
            )
        stack.append((lo, mid, Dlo, Dmid, left, depth + 1))
        stack.append((mid, hi, Dmid, Dhi, right, depth + 1))
    return total
