"""Acceptance sets for risk-constrained strategies at a fixed (t, omega).

The acceptance set is A = { zeta : f(zeta'mu, ||zeta'sigma||) <= K } with f the
closed-form risk functional; its image in volatility space is A_vol = A sigma
(the set of zeta'sigma over feasible zeta). The module provides membership,
the boundary radius along a ray, and the projection of an m-vector onto A_vol
together with its strategy pre-image.

The projection exploits the two-fund structure of the KKT conditions: the
minimizer lies in span{zeta_M, (sigma sigma')^{-1} sigma z}. The search is a
multistart Nelder-Mead over that span (penalized feasibility), followed by a
radial pullback to exact feasibility and a boundary bisection along the final
ray. For a scalar market (n = m = 1) with the var/tvar/lel kinds the set is an
interval (the loss exponent is concave along any ray), so projection reduces
to clamping; that fast path is what the BSDE solver hits in bulk.
"""

from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize

from .errors import UnboundedDirection
from .risk import risk_functional

CONTAINS_TOL = 1e-12
_RADIUS_CAP = 1e9
_INTERVAL_KINDS = ("var", "tvar", "lel")


class ProjectionResult(NamedTuple):
    point: np.ndarray
    distance: float
    zeta: np.ndarray


class ConstraintSpec:
    """Risk bound K, market coefficients and distortion at one (t, omega)."""

    def __init__(self, params=None, K=None, mu=None, sigma=None, unconstrained=False):
        self.unconstrained = bool(unconstrained)
        self.params = params
        self.K = K
        if self.unconstrained:
            self.mu = None if mu is None else np.atleast_1d(np.asarray(mu, dtype=float))
            self.sigma = None if sigma is None else np.atleast_2d(np.asarray(sigma, dtype=float))
            return
        self.mu = np.atleast_1d(np.asarray(mu, dtype=float))
        self.sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        n, m = self.sigma.shape
        if self.mu.shape != (n,):
            raise ValueError(f"mu shape {self.mu.shape} does not match sigma rows {n}")
        if n > m:
            raise ValueError(f"need n <= m, got sigma shape {self.sigma.shape}")
        if not K < 1.0:
            raise ValueError(f"risk bound must satisfy K < 1 (compactness), got {K}")
        f00 = risk_functional(0.0, 0.0, params)
        if K < f00 - 1e-12:
            raise ValueError(
                f"risk bound K={K} rejects the zero strategy (f(0,0)={f00:.6g})"
            )

    @property
    def n(self):
        return self.sigma.shape[0]

    @property
    def m(self):
        return self.sigma.shape[1]

    def stats(self, zeta):
        """(zeta'mu, ||zeta'sigma||) for one zeta (n,) or a batch (..., n)."""
        zeta = np.asarray(zeta, dtype=float)
        x = zeta @ self.mu
        v = zeta @ self.sigma
        return x, np.linalg.norm(v, axis=-1)

    def f_of(self, zeta):
        x, y = self.stats(zeta)
        return risk_functional(x, y, self.params)

    @cached_property
    def _is_interval_1d(self):
        return (
            not self.unconstrained
            and self.n == 1
            and self.m == 1
            and self.params.distortion.kind in _INTERVAL_KINDS
        )

    @cached_property
    def interval(self):
        """Feasible interval [lo, hi] in strategy space; 1D var/tvar/lel only."""
        if not self._is_interval_1d:
            raise ValueError("feasible interval is defined only for 1D var/tvar/lel specs")
        mu0 = float(self.mu[0])
        y0 = abs(float(self.sigma[0, 0]))
        hi = float(radial_sup(np.array([mu0]), np.array([y0]), self.params, self.K)[0])
        lo = -float(radial_sup(np.array([-mu0]), np.array([y0]), self.params, self.K)[0])
        return lo, hi


def contains(zeta, spec, tol=CONTAINS_TOL):
    """Membership of zeta in the acceptance set, with boundary tolerance."""
    if spec.unconstrained:
        return True
    return bool(spec.f_of(np.asarray(zeta, dtype=float)) <= spec.K + tol)


def radial_sup(xd, yd, params, K):
    """Vectorized sup{s >= 0 : f(s*xd, s*yd) <= K} by doubling then bisection.

    xd is the per-unit return along the ray, yd >= 0 the per-unit volatility.
    Raises UnboundedDirection past 1e9 (a spec violating K < 1 in practice,
    e.g. yd = 0 with xd >= 0).
    """
    xd, yd = np.broadcast_arrays(
        np.atleast_1d(np.asarray(xd, dtype=float)),
        np.atleast_1d(np.asarray(yd, dtype=float)),
    )
    lo = np.zeros_like(xd)
    hi = np.ones_like(xd)
    g_hi = risk_functional(hi * xd, hi * yd, params) - K
    for _ in range(64):
        feas = g_hi <= 0
        if not np.any(feas):
            break
        lo = np.where(feas, hi, lo)
        hi = np.where(feas, 2.0 * hi, hi)
        if np.any(hi[feas] > _RADIUS_CAP):
            raise UnboundedDirection(
                "acceptance set appears unbounded along a ray (radius > 1e9)"
            )
        g_hi = risk_functional(hi * xd, hi * yd, params) - K
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        feas = risk_functional(mid * xd, mid * yd, params) - K <= 0
        lo = np.where(feas, mid, lo)
        hi = np.where(feas, hi, mid)
        if np.max(hi - lo) < 1e-10:
            break
    return lo


def boundary_radius(direction, spec):
    """sup{s >= 0 : contains(s * direction)} along a unit direction."""
    if spec.unconstrained:
        raise ValueError("boundary radius is undefined for an unconstrained spec")
    d = np.asarray(direction, dtype=float)
    nd = np.linalg.norm(d)
    if nd == 0:
        raise ValueError("direction must be nonzero")
    d = d / nd
    xd = float(d @ spec.mu)
    yd = float(np.linalg.norm(d @ spec.sigma))
    return float(radial_sup(np.array([xd]), np.array([yd]), spec.params, spec.K)[0])


def interval_bounds_1d(mu_vals, sigma_vals, params, K):
    """Feasible intervals [lo, hi] for batches of 1D specs sharing (params, K).

    Compresses to unique (mu, |sigma|) pairs before the radial search, so the
    indicator-drift market costs two root finds regardless of batch size.
    """
    mu_vals = np.asarray(mu_vals, dtype=float).ravel()
    y_vals = np.abs(np.asarray(sigma_vals, dtype=float).ravel())
    pairs = np.column_stack([mu_vals, y_vals])
    uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
    hi_u = radial_sup(uniq[:, 0], uniq[:, 1], params, K)
    lo_u = -radial_sup(-uniq[:, 0], uniq[:, 1], params, K)
    return lo_u[inverse], hi_u[inverse]


def project(z_tilde, spec):
    """Project z_tilde onto A_vol; returns (point, distance, strategy pre-image)."""
    z = np.asarray(z_tilde, dtype=float).ravel()
    if spec.unconstrained:
        G = spec.sigma @ spec.sigma.T if spec.sigma is not None else None
        zeta = None if G is None else np.linalg.solve(G, spec.sigma @ z)
        return ProjectionResult(z.copy(), 0.0, zeta)

    if spec._is_interval_1d:
        lo, hi = spec.interval
        s0 = float(spec.sigma[0, 0])
        a, b = sorted((lo * s0, hi * s0))
        point = float(np.clip(z[0], a, b))
        return ProjectionResult(
            np.array([point]), abs(float(z[0]) - point), np.array([point / s0])
        )

    return _project_span(z, spec)


def _project_span(z, spec):
    sig = spec.sigma
    G = sig @ sig.T
    zeta_m = np.linalg.solve(G, spec.mu)
    v = np.linalg.solve(G, sig @ z)
    E = _orthonormal_span(np.column_stack([zeta_m, v]))
    if E.shape[1] == 0:
        return ProjectionResult(np.zeros(spec.m), float(np.linalg.norm(z)), np.zeros(spec.n))

    A = sig.T @ E  # maps span coefficients to volatility space
    c_unc, *_ = np.linalg.lstsq(A, z, rcond=None)

    def obj(c):
        return float(np.sum((z - A @ c) ** 2))

    def feas_gap(c):
        return float(spec.f_of(E @ c)) - spec.K

    if feas_gap(c_unc) <= CONTAINS_TOL:
        zeta = E @ c_unc
        point = A @ c_unc
        return ProjectionResult(point, float(np.linalg.norm(z - point)), zeta)

    penalty_w = 1e6 * (1.0 + float(z @ z))

    def penalized(c):
        return obj(c) + penalty_w * max(0.0, feas_gap(c)) ** 2

    starts = _multistart_points(c_unc, E, spec)
    best_c, best_obj = None, np.inf
    for c0 in starts:
        res = minimize(
            penalized,
            c0,
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 600, "maxfev": 1200},
        )
        for cand in (res.x, np.asarray(c0, dtype=float)):
            c_feas = _pull_to_feasible(cand, feas_gap)
            val = obj(c_feas)
            if val < best_obj:
                best_obj, best_c = val, c_feas

    best_c = _refine_on_ray(best_c, obj, feas_gap, E, spec)
    zeta = E @ best_c
    point = A @ best_c
    return ProjectionResult(point, float(np.linalg.norm(z - point)), zeta)


def _orthonormal_span(cols):
    q, r = np.linalg.qr(cols)
    keep = np.abs(np.diag(r)) > 1e-12 * max(1.0, np.max(np.abs(cols), initial=0.0))
    return q[:, keep]


def _multistart_points(c_unc, E, spec):
    """Nine deterministic starts: unconstrained optimum, origin, and a
    boundary-scaled coarse grid of directions."""
    k = E.shape[1]
    starts = [np.zeros(k), np.asarray(c_unc, dtype=float), 0.5 * np.asarray(c_unc, dtype=float)]
    if k == 1:
        dirs = [(f, np.array([s])) for s in (1.0, -1.0) for f in (0.9, 0.5, 0.25)]
    else:
        angles = np.linspace(0.0, 2 * np.pi, 7)[:-1]
        dirs = [(0.9, np.array([np.cos(a), np.sin(a)])) for a in angles]
    for frac, d in dirs:
        xd = float((E @ d) @ spec.mu)
        yd = float(np.linalg.norm((E @ d) @ spec.sigma))
        s = float(radial_sup(np.array([xd]), np.array([yd]), spec.params, spec.K)[0])
        starts.append(frac * s * d)
    return starts


def _pull_to_feasible(c, feas_gap):
    """Shrink c radially until feasible (the origin is always acceptable)."""
    c = np.asarray(c, dtype=float)
    if feas_gap(c) <= CONTAINS_TOL:
        return c
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if feas_gap(mid * c) <= 0:
            lo = mid
        else:
            hi = mid
    return lo * c


def _refine_on_ray(c, obj, feas_gap, E, spec):
    """Bisection along the final ray: snap to the boundary when that helps."""
    norm_c = np.linalg.norm(c)
    if norm_c < 1e-14:
        return c
    d = c / norm_c
    xd = float((E @ d) @ spec.mu)
    yd = float(np.linalg.norm((E @ d) @ spec.sigma))
    s = float(radial_sup(np.array([xd]), np.array([yd]), spec.params, spec.K)[0])
    cand = s * d
    if feas_gap(cand) <= CONTAINS_TOL and obj(cand) < obj(c):
        return cand
    return c


def project_bruteforce(z_tilde, spec, box_halfwidth, grid_resolution):
    """Exhaustive grid-scan oracle for project.

    Scans zeta over the cube [-box, box]^n at the given resolution, keeps
    feasible minimizers of ||z - zeta'sigma||, breaking ties by smallest
    ||zeta|| then lexicographic order.
    """
    z = np.asarray(z_tilde, dtype=float).ravel()
    n = spec.n
    # integer-multiple grid: halving the resolution yields an exact superset
    half_steps = int(np.floor(box_halfwidth / grid_resolution))
    axis = np.arange(-half_steps, half_steps + 1) * grid_resolution
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    zetas = np.column_stack([g.ravel() for g in mesh])

    best = None
    chunk = 1 << 21
    for start in range(0, zetas.shape[0], chunk):
        batch = zetas[start : start + chunk]
        if spec.unconstrained:
            feas = np.ones(batch.shape[0], dtype=bool)
        else:
            x, y = spec.stats(batch)
            feas = risk_functional(x, y, spec.params) <= spec.K + CONTAINS_TOL
        if not np.any(feas):
            continue
        cand = batch[feas]
        pts = cand @ spec.sigma
        d = np.linalg.norm(z[None, :] - pts, axis=1)
        dmin = d.min()
        ties = np.flatnonzero(d == dmin)
        norms = np.linalg.norm(cand[ties], axis=1)
        ties = ties[norms == norms.min()]
        order = np.lexsort(cand[ties].T[::-1])
        idx = ties[order[0]]
        key = (dmin, float(np.linalg.norm(cand[idx])), tuple(cand[idx]))
        if best is None or key < best[0]:
            best = (key, pts[idx], cand[idx])
    _, point, zeta = best
    return ProjectionResult(np.asarray(point), float(best[0][0]), np.asarray(zeta))
