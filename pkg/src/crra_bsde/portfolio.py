"""Optimal constrained strategies, value functions, three-fund decomposition
and martingale-optimality diagnostics.

The optimal strategy at each grid point is the pre-image of the projection of
Ztil onto the volatility-space acceptance set. Every optimal strategy splits
over three funds: the savings account, the Merton fund zeta_M / (1-p), and the
volatility-hedging fund (sigma sigma')^{-1} sigma Z built from the BSDE's Z.
The martingale diagnostic simulates U_p(X(T)) on fresh paths and compares its
mean against U_p(x) exp(Y(0)): equality (within Monte Carlo error) certifies
optimality, <= certifies the supermartingale property of suboptimal feasible
strategies.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .bsde import CrraDriver, DistortionConstraintFactory
from .constraint import interval_bounds_1d, project
from .errors import NonpositiveWealth, PreimageResidual
from .market import simulate_paths, wealth_terminal
from .risk import risk_functional

PREIMAGE_TOL = 1e-6
FEASIBLE_TOL = 1e-8
_FUND_ZERO = 1e-12


@dataclass
class StrategyField:
    """Optimal zeta*(t_i, path j) with three-fund coefficients and feasibility flags."""

    zeta: np.ndarray       # (J, N, n)
    beta1: np.ndarray      # (J, N)
    beta2: np.ndarray      # (J, N)
    feasible: np.ndarray   # (J, N) bool
    decomposition_residual: np.ndarray = field(repr=False, default=None)


class DecompositionResult(NamedTuple):
    beta1: float
    beta2: float
    residual: float


def optimal_strategy(solution, params):
    """Strategy field from a BSDE solution: project Ztil at every grid point."""
    grid, paths = solution.grid, solution.paths
    prepared = CrraDriver(params).prepare(grid, paths)
    J, N = paths.J, grid.N
    n = params.model.n
    zeta = np.empty((J, N, n))
    beta1 = np.empty((J, N))
    beta2 = np.empty((J, N))
    feasible = np.empty((J, N), dtype=bool)
    resid = np.empty((J, N))
    one_minus_p = 1.0 - params.p
    for i in range(N):
        zt = prepared.z_tilde_step(i, solution.Z[:, i, :])
        z_i, point, _ = prepared.project_step(i, zt)
        achieved = np.einsum("ji,jik->jk", z_i, prepared.sigma[i])
        err = np.linalg.norm(achieved - point, axis=-1)
        if np.any(err > PREIMAGE_TOL):
            raise PreimageResidual(
                f"strategy pre-image misses the projected point by {err.max():.3e} "
                f"at step {i}"
            )
        zeta[:, i, :] = z_i
        if prepared.mode == "interval":
            factory = params.constraint
            x = np.einsum("ji,ji->j", z_i, prepared.mu[i])
            y = np.abs(achieved[:, 0])
            feasible[:, i] = risk_functional(x, y, factory.risk_params) <= factory.K + FEASIBLE_TOL
        elif prepared.mode == "none":
            feasible[:, i] = True
        else:
            specs = prepared._specs(i)
            feasible[:, i] = [
                spec.unconstrained or spec.f_of(z_i[j]) <= spec.K + FEASIBLE_TOL
                for j, spec in enumerate(specs)
            ]
        G = prepared.gram[i]
        f1 = np.linalg.solve(G, prepared.mu[i][..., None])[..., 0] / one_minus_p
        f2 = np.linalg.solve(
            G, np.einsum("jab,jb->ja", prepared.sigma[i], solution.Z[:, i, :])[..., None]
        )[..., 0]
        beta1[:, i], beta2[:, i], resid[:, i] = _decompose_batch(z_i, f1, f2)
    return StrategyField(zeta=zeta, beta1=beta1, beta2=beta2, feasible=feasible,
                         decomposition_residual=resid)


def optimal_policy(solution, params):
    """State-feedback policy (i, W) -> zeta estimated from the fitted regression.

    Evaluates the solution's Z at arbitrary states (so fresh, out-of-sample
    paths can be driven by the optimal strategy) and projects as in
    optimal_strategy.
    """
    model = params.model
    one_minus_p = 1.0 - params.p

    def policy(i, W):
        W = np.asarray(W, dtype=float)
        t = solution.grid.times[i]
        Z = solution.z_at(i, W)
        mu, sig = model.coefficients(t, W)
        sig_t = np.swapaxes(sig, -1, -2)
        G = sig @ sig_t
        rhs = mu + np.einsum("jab,jb->ja", sig, Z)
        pre = np.linalg.solve(G, rhs[..., None])[..., 0] / one_minus_p
        zt = np.einsum("jab,jb->ja", sig_t, pre)
        factory = params.constraint
        if factory is None:
            return pre
        if (
            isinstance(factory, DistortionConstraintFactory)
            and model.n == 1
            and model.m == 1
            and factory.risk_params.distortion.kind in ("var", "tvar", "lel")
        ):
            s = sig[:, 0, 0]
            lo, hi = interval_bounds_1d(mu[:, 0], s, factory.risk_params, factory.K)
            a, b = np.minimum(lo * s, hi * s), np.maximum(lo * s, hi * s)
            point = np.clip(zt[:, 0], a, b)
            return (point / s)[:, None]
        out = np.empty((W.shape[0], model.n))
        for j in range(W.shape[0]):
            out[j] = project(zt[j], factory(t, W[j])).zeta
        return out

    return policy


def constant_policy(zeta_vec):
    """Policy holding a fixed strategy vector at every (t, state)."""
    zeta_vec = np.atleast_1d(np.asarray(zeta_vec, dtype=float))

    def policy(i, W):
        return np.broadcast_to(zeta_vec, (np.asarray(W).shape[0], zeta_vec.shape[0]))

    return policy


def value_function(t_index, x, solution):
    """Dynamic value function v(t_i, x) = U_p(x) exp(Y_{t_i}) per path."""
    if not x > 0:
        raise NonpositiveWealth(f"wealth must be > 0, got {x}")
    params = getattr(solution.driver, "params", None)
    if params is None:
        raise ValueError("value function requires a solution produced by a CRRA driver")
    p = params.p
    return (x**p / p) * np.exp(solution.Y[:, t_index])


def three_fund_decompose(zeta, model, t, state, Z, p):
    """Coefficients of zeta over the Merton fund zeta_M/(1-p) and the hedging
    fund (sigma sigma')^{-1} sigma Z, with the least-squares residual norm.

    Parallel (or absent) funds fall back to the documented convention: beta2
    is reported as 0 and beta1 absorbs everything.
    """
    zeta = np.atleast_1d(np.asarray(zeta, dtype=float))
    Z = np.atleast_1d(np.asarray(Z, dtype=float))
    mu, sig = model.coefficients(t, state)
    G = sig @ sig.T
    f1 = np.linalg.solve(G, mu) / (1.0 - p)
    f2 = np.linalg.solve(G, sig @ Z)
    b1, b2, res = _decompose_batch(zeta[None, :], f1[None, :], f2[None, :])
    return DecompositionResult(float(b1[0]), float(b2[0]), float(res[0]))


def _decompose_batch(zeta, f1, f2):
    """Least-squares fit of zeta onto span{f1, f2} per row; beta2 = 0 when the
    second fund is absent or parallel to the first."""
    a11 = np.einsum("ji,ji->j", f1, f1)
    a22 = np.einsum("ji,ji->j", f2, f2)
    a12 = np.einsum("ji,ji->j", f1, f2)
    b1 = np.einsum("ji,ji->j", zeta, f1)
    b2 = np.einsum("ji,ji->j", zeta, f2)
    det = a11 * a22 - a12**2
    f1_zero = np.sqrt(a11) < _FUND_ZERO
    f2_zero = np.sqrt(a22) < _FUND_ZERO
    collinear = det <= 1e-12 * a11 * a22

    beta1 = np.zeros_like(a11)
    beta2 = np.zeros_like(a11)
    regular = ~(f1_zero | f2_zero | collinear)
    beta1[regular] = (a22 * b1 - a12 * b2)[regular] / det[regular]
    beta2[regular] = (a11 * b2 - a12 * b1)[regular] / det[regular]
    only_f1 = ~regular & ~f1_zero
    beta1[only_f1] = b1[only_f1] / a11[only_f1]
    only_f2 = ~regular & f1_zero & ~f2_zero
    beta2[only_f2] = b2[only_f2] / a22[only_f2]
    fit = beta1[:, None] * f1 + beta2[:, None] * f2
    residual = np.linalg.norm(zeta - fit, axis=-1)
    return beta1, beta2, residual


def martingale_diagnostic(policy, solution, model, J_test, seed, x0=1.0):
    """Monte Carlo check of the martingale optimality principle on fresh paths.

    Simulates terminal wealth under the given state-feedback policy and
    reports E[U_p(X(T))] against R(0) = U_p(x0) exp(Y(0)) with the standard
    error of the mean. Uses out-of-sample paths to avoid regression
    look-ahead bias.
    """
    params = getattr(solution.driver, "params", None)
    if params is None:
        raise ValueError("martingale diagnostic requires a solution produced by a CRRA driver")
    p = params.p
    paths_test = simulate_paths(solution.grid, solution.paths.m, J_test, seed)
    X_T = wealth_terminal(model, paths_test, policy, x0)
    R_T = X_T**p / p
    mean = float(R_T.mean())
    se = float(R_T.std(ddof=1) / np.sqrt(J_test))
    R_0 = float((x0**p / p) * np.exp(solution.y0))
    return {"mean_R_T": mean, "R_0": R_0, "std_error": se}
