"""Quadratic BSDE for the CRRA value function and its regression Monte Carlo solver.

The value process solves Y(t) = 0 - int_t^T Z dW - int_t^T h(u, Z_u) du with
quadratic driver

    h(u, z) = -p r - ||z||^2 / 2
              - p(1-p)/2 * ( ||Ztil||^2 - dist(Ztil, A_vol(u))^2 ),

where Ztil = sigma'(sigma sigma')^{-1}(mu + sigma z) / (1 - p) and A_vol(u) is
the image of the acceptance set in volatility space. Without a constraint the
distance term vanishes. The driver is truncated by clamping ||z|| radially at
a level M, which makes it globally Lipschitz so the forward Picard scheme
applies:

    Y_(k+1)(t_i) = E^[ -sum_{l>=i} h(t_l, ., Z_(k)(t_l)) dt | t_i ]
    Z_(k+1)(t_i) = E^[ dW_i/dt * (-sum_{l>i} h dt) | t_i ]

with E^ a least-squares regression on basis functions of the Brownian state.

The Z-regression is evaluated through the tower property: conditioning the
future driver sum at t_{i+1} first gives E[dW_i/dt * Y_(k+1)(t_{i+1}) | t_i],
so the regression target is dW_i/dt times the fitted next-step Y, centered by
its own fitted t_i-mean (a martingale control variate). Both steps leave the
population value unchanged and remove the variance of the raw driver sum,
which would otherwise be amplified through the quadratic driver and blow up
the iteration. For the same reason the clamp level is ramped up geometrically
across Picard iterations until it reaches the requested truncation; early
iterations act as a warm start and convergence is declared only once the full
level is active (or the iterate is provably inside the clamp). A backward
dynamic-programming pass is available as a cross-check scheme.
"""

from dataclasses import dataclass, field

import numpy as np

from .constraint import ConstraintSpec, interval_bounds_1d, project
from .errors import NoConvergence, RegressionRankDeficient
from .market import check_gram, gram_matrix

_SVD_RCOND = 1e-10


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

@dataclass
class DriverParams:
    """Risk aversion exponent, market, and the per-(t, state) constraint factory."""

    p: float
    model: object
    constraint: callable = None  # (t, state) -> ConstraintSpec; None = unconstrained

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"risk aversion exponent p must lie in (0, 1), got {self.p}")


class DistortionConstraintFactory:
    """Builds the acceptance set at (t, state) from a distortion risk bound."""

    def __init__(self, model, risk_params, K):
        self.model = model
        self.risk_params = risk_params
        self.K = K

    def __call__(self, t, state):
        mu, sig = self.model.coefficients(t, np.asarray(state, dtype=float))
        return ConstraintSpec(params=self.risk_params, K=self.K, mu=mu, sigma=sig)


def z_tilde(z, model, t, state, p):
    """sigma'(sigma sigma')^{-1}(mu + sigma z) / (1 - p) at (t, state)."""
    z = np.asarray(z, dtype=float).ravel()
    mu, sig = model.coefficients(t, state)
    G = gram_matrix(sig)
    check_gram(G, model.cond_bound)
    return sig.T @ np.linalg.solve(G, mu + sig @ z) / (1.0 - p)


def driver_h(t, state, z, params):
    """Pointwise driver value h(t, state, z)."""
    return CrraDriver(params)(t, state, z)


def truncate_driver(params, M):
    """Driver with z clamped radially at M; identical to driver_h for ||z|| <= M."""
    if not M > 0:
        raise ValueError(f"truncation level must be > 0, got {M}")
    return CrraDriver(params, truncation=M)


def clamp_radial(z, M):
    """Limit ||z|| to M, preserving direction; no-op when M is None."""
    if M is None:
        return np.asarray(z, dtype=float)
    z = np.asarray(z, dtype=float)
    norms = np.linalg.norm(z, axis=-1, keepdims=True)
    factor = np.where(norms > M, M / np.maximum(norms, 1e-300), 1.0)
    return z * factor


class CrraDriver:
    """Callable driver h(t, state, z) with optional radial truncation.

    prepare(grid, paths) builds the vectorized per-step evaluator the solver
    uses; for a scalar market with var/tvar/lel constraints the projection
    reduces to clamping onto precomputed feasible intervals.
    """

    def __init__(self, params, truncation=None):
        self.params = params
        self.truncation = truncation

    def __call__(self, t, state, z):
        p = self.params.p
        model = self.params.model
        zc = clamp_radial(np.asarray(z, dtype=float).ravel(), self.truncation)
        zt = z_tilde(zc, model, t, state, p)
        dist = 0.0
        if self.params.constraint is not None:
            spec = self.params.constraint(t, state)
            if not spec.unconstrained:
                dist = project(zt, spec).distance
        return float(
            -p * model.r
            - 0.5 * zc @ zc
            - 0.5 * p * (1.0 - p) * (zt @ zt - dist**2)
        )

    def prepare(self, grid, paths):
        return _PreparedCrraDriver(self, grid, paths)


class _PreparedCrraDriver:
    """Per-step coefficient caches and vectorized driver evaluation."""

    def __init__(self, driver, grid, paths):
        params = driver.params
        model = params.model
        self.driver = driver
        self.params = params
        self.grid = grid
        self.paths = paths
        self.p = params.p
        self.mu = []      # (J, n) per step
        self.sigma = []   # (J, n, m) per step
        self.theta = []   # (J, m) per step
        self.proj = []    # (J, m, m) orthogonal projector sigma'(sigma sigma')^{-1} sigma
        self.gram = []
        times = grid.times
        for i in range(grid.N):
            mu, sig = model.coefficients(times[i], paths.W[:, i, :])
            G = gram_matrix(sig)
            check_gram(G, model.cond_bound)
            sig_t = np.swapaxes(sig, -1, -2)
            theta = (sig_t @ np.linalg.solve(G, mu[..., None]))[..., 0]
            proj = sig_t @ np.linalg.solve(G, sig)
            self.mu.append(mu)
            self.sigma.append(sig)
            self.theta.append(theta)
            self.proj.append(proj)
            self.gram.append(G)
        self._setup_constraint()

    def _setup_constraint(self):
        factory = self.params.constraint
        model = self.params.model
        self.mode = "none"
        if factory is None:
            return
        fast = (
            isinstance(factory, DistortionConstraintFactory)
            and model.n == 1
            and model.m == 1
            and factory.risk_params.distortion.kind in ("var", "tvar", "lel")
        )
        if fast:
            self.mode = "interval"
            self.vol_lo, self.vol_hi = [], []
            for i in range(self.grid.N):
                mu = self.mu[i][:, 0]
                s = self.sigma[i][:, 0, 0]
                lo, hi = interval_bounds_1d(mu, s, factory.risk_params, factory.K)
                a, b = lo * s, hi * s
                self.vol_lo.append(np.minimum(a, b))
                self.vol_hi.append(np.maximum(a, b))
        else:
            self.mode = "general"
            self._spec_cache = {}

    def _specs(self, i):
        if i not in self._spec_cache:
            t = self.grid.times[i]
            W = self.paths.W[:, i, :]
            self._spec_cache[i] = [
                self.params.constraint(t, W[j]) for j in range(self.paths.J)
            ]
        return self._spec_cache[i]

    def clamp(self, Z):
        return clamp_radial(Z, self.driver.truncation)

    def z_tilde_step(self, i, Z):
        """Ztil for a batch Z of shape (J, m); Z is used as given (no clamp)."""
        pz = np.einsum("jab,jb->ja", self.proj[i], Z)
        return (self.theta[i] + pz) / (1.0 - self.p)

    def project_step(self, i, Zt):
        """Projection of a batch Zt onto A_vol: (zeta (J,n), point (J,m), dist (J,))."""
        J = Zt.shape[0]
        if self.mode == "none":
            pre = np.linalg.solve(
                self.gram[i], np.einsum("jab,jb->ja", self.sigma[i], Zt)[..., None]
            )[..., 0]
            return pre, Zt.copy(), np.zeros(J)
        if self.mode == "interval":
            point = np.clip(Zt[:, 0], self.vol_lo[i], self.vol_hi[i])
            dist = np.abs(Zt[:, 0] - point)
            zeta = point / self.sigma[i][:, 0, 0]
            return zeta[:, None], point[:, None], dist
        zeta = np.empty((J, self.params.model.n))
        point = np.empty_like(Zt)
        dist = np.empty(J)
        for j, spec in enumerate(self._specs(i)):
            res = project(Zt[j], spec)
            zeta[j] = res.zeta
            point[j] = res.point
            dist[j] = res.distance
        return zeta, point, dist

    def eval_step(self, i, Z):
        """Driver values h(t_i, W_i, Z) for a batch Z of shape (J, m)."""
        p = self.p
        zc = self.clamp(Z)
        zt = self.z_tilde_step(i, zc)
        if self.mode == "none":
            dist2 = 0.0
        elif self.mode == "interval":
            clipped = np.clip(zt[:, 0], self.vol_lo[i], self.vol_hi[i])
            dist2 = (zt[:, 0] - clipped) ** 2
        else:
            dist2 = self.project_step(i, zt)[2] ** 2
        return (
            -p * self.params.model.r
            - 0.5 * np.einsum("jk,jk->j", zc, zc)
            - 0.5 * p * (1.0 - p) * (np.einsum("jk,jk->j", zt, zt) - dist2)
        )


class _PointwisePrepared:
    """Adapter running a plain callable driver h(t, state, z) path by path."""

    def __init__(self, fn, grid, paths):
        self.fn = fn
        self.grid = grid
        self.paths = paths

    def eval_step(self, i, Z):
        t = self.grid.times[i]
        W = self.paths.W[:, i, :]
        return np.array([self.fn(t, W[j], Z[j]) for j in range(self.paths.J)])


def default_truncation_level(params, grid, paths):
    """10x the unconstrained |Ztil| scale max||theta|| / (1-p) over the grid.

    Floored at scale 0.1 so a driftless market does not clamp z to zero.
    """
    model = params.model
    max_theta = 0.0
    for i in range(grid.N):
        mu, sig = model.coefficients(grid.times[i], paths.W[:, i, :])
        G = gram_matrix(sig)
        theta = (np.swapaxes(sig, -1, -2) @ np.linalg.solve(G, mu[..., None]))[..., 0]
        max_theta = max(max_theta, float(np.max(np.linalg.norm(theta, axis=-1))))
    return 10.0 * max(max_theta, 0.1) / (1.0 - params.p)


# ---------------------------------------------------------------------------
# regression bases
# ---------------------------------------------------------------------------

class PolynomialBasis:
    """Monomials of each standardized state coordinate up to a degree."""

    def __init__(self, degree=3):
        if degree < 1:
            raise ValueError("polynomial degree must be >= 1")
        self.degree = degree
        self.id = f"poly{degree}"

    def fit_step(self, W):
        mean = W.mean(axis=0)
        std = W.std(axis=0)
        keep = std > 1e-12
        return _StepPoly(mean, np.where(keep, std, 1.0), keep, self.degree)


class _StepPoly:
    def __init__(self, mean, std, keep, degree):
        self.mean = mean
        self.std = std
        self.keep = keep
        self.degree = degree
        self.n_columns = 1 + int(keep.sum()) * degree

    def design(self, W):
        W = np.asarray(W, dtype=float)
        cols = [np.ones(W.shape[0])]
        u = (W[:, self.keep] - self.mean[self.keep]) / self.std[self.keep]
        for k in range(u.shape[1]):
            pw = u[:, k]
            for _ in range(self.degree):
                cols.append(pw)
                pw = pw * u[:, k]
        return np.column_stack(cols)


class IndicatorBasis:
    """Piecewise-constant cells from per-coordinate quantile bins.

    For a 1D state this is the full hypercube basis; for higher dimensions the
    model is additive (intercept plus per-coordinate indicators). Useful when
    the coefficients have kinks the polynomial basis cannot represent.
    """

    def __init__(self, bins=8):
        if bins < 2:
            raise ValueError("indicator basis needs bins >= 2")
        self.bins = bins
        self.id = f"indicator{bins}"

    def fit_step(self, W):
        qs = np.arange(1, self.bins) / self.bins
        edges = [np.unique(np.quantile(W[:, k], qs)) for k in range(W.shape[1])]
        return _StepIndicator(edges, W)


class _StepIndicator:
    def __init__(self, edges, W_train):
        self.edges = edges
        # keep only cells occupied by training paths; map strays to the
        # nearest occupied cell so prediction never produces an all-zero row
        self.lookup = []
        for k, e in enumerate(edges):
            idx = np.searchsorted(e, W_train[:, k], side="right")
            occupied = np.unique(idx)
            table = np.searchsorted(occupied, np.arange(len(e) + 1))
            self.lookup.append(np.clip(table, 0, len(occupied) - 1))
        self.cells = [int(lu.max()) + 1 for lu in self.lookup]
        if len(edges) == 1:
            self.n_columns = self.cells[0]
        else:
            self.n_columns = 1 + sum(c - 1 for c in self.cells)

    def _cell_index(self, W, k):
        raw = np.searchsorted(self.edges[k], W[:, k], side="right")
        return self.lookup[k][raw]

    def design(self, W):
        W = np.asarray(W, dtype=float)
        J = W.shape[0]
        if len(self.edges) == 1:
            X = np.zeros((J, self.cells[0]))
            X[np.arange(J), self._cell_index(W, 0)] = 1.0
            return X
        cols = [np.ones((J, 1))]
        for k, cells in enumerate(self.cells):
            onehot = np.zeros((J, cells))
            onehot[np.arange(J), self._cell_index(W, k)] = 1.0
            cols.append(onehot[:, 1:])
        return np.column_stack(cols)


def resolve_basis(basis_spec):
    """Accepts a basis object, or shorthand strings like 'poly3' / 'indicator8'."""
    if hasattr(basis_spec, "fit_step"):
        return basis_spec
    s = str(basis_spec)
    if s.startswith("poly"):
        return PolynomialBasis(int(s[4:]) if len(s) > 4 else 3)
    if s.startswith("indicator"):
        return IndicatorBasis(int(s[9:]) if len(s) > 9 else 8)
    raise ValueError(f"unknown regression basis spec: {basis_spec!r}")


class _StepRegression:
    """Cached SVD least squares for one time step's design matrix."""

    def __init__(self, X):
        if X.shape[0] < X.shape[1]:
            raise RegressionRankDeficient(
                f"{X.shape[1]} basis functions but only {X.shape[0]} paths"
            )
        U, S, Vt = np.linalg.svd(X, full_matrices=False)
        if S[0] <= 0 or S[-1] <= _SVD_RCOND * S[0]:
            raise RegressionRankDeficient(
                "regression design matrix is numerically rank deficient "
                "(basis too rich for the path count)"
            )
        self.U = U
        self.S = S
        self.Vt = Vt

    def fit(self, y):
        """Fitted values and coefficients; y may be (J,) or (J, R)."""
        proj = self.U.T @ y
        fitted = self.U @ proj
        coef = self.Vt.T @ (proj / (self.S if y.ndim == 1 else self.S[:, None]))
        return fitted, coef


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

@dataclass
class PicardOptions:
    max_iters: int = 30
    tol: float = 1e-4


@dataclass
class BsdeSolution:
    """Discrete (Y, Z) fields with the fitted regression for policy evaluation."""

    grid: object
    paths: object
    Y: np.ndarray                 # (J, N+1), Y[:, N] = 0
    Z: np.ndarray                 # (J, N, m)
    picard_iterations: int
    deltas: list
    regression_basis_id: str
    step_bases: list = field(repr=False)
    y_coeffs: list = field(repr=False)
    z_coeffs: list = field(repr=False)
    truncation: float = None
    max_abs_z: float = 0.0
    truncation_flagged: bool = False
    clamp_schedule: list = field(default_factory=list, repr=False)
    driver: object = field(default=None, repr=False)

    @property
    def y0(self):
        return float(self.Y[0, 0])

    def y_at(self, i, W):
        """Fitted Y(t_i, w) at arbitrary states W of shape (P, m)."""
        if i == self.grid.N:
            return np.zeros(np.asarray(W).shape[0])
        return self.step_bases[i].design(W) @ self.y_coeffs[i]

    def z_at(self, i, W):
        """Fitted Z(t_i, w) at arbitrary states W of shape (P, m); (P, m) output."""
        if i >= self.grid.N:
            return np.zeros((np.asarray(W).shape[0], self.paths.m))
        return self.step_bases[i].design(W) @ self.z_coeffs[i]


def opportunity_process(solution):
    """exp(Y) per path and step: the value-function factor."""
    return np.exp(solution.Y)


def solve_bsde(driver, grid, paths, basis_spec="poly3", picard=None, scheme="forward",
               y_bound=1e4):
    """Solve the BSDE on simulated paths by regression Monte Carlo.

    driver is a CrraDriver (vectorized) or any callable h(t, state, z).
    scheme 'forward' runs the Picard iteration; 'backward' runs a single
    backward dynamic-programming pass as a cross-check.
    """
    if picard is None:
        picard = PicardOptions()
    elif isinstance(picard, dict):
        picard = PicardOptions(**picard)
    basis = resolve_basis(basis_spec)
    J, N, m = paths.J, grid.N, paths.m
    dt = grid.dt
    step_bases = [basis.fit_step(paths.W[:, i, :]) for i in range(N)]
    regs = [_StepRegression(step_bases[i].design(paths.W[:, i, :])) for i in range(N)]
    prepared = (
        driver.prepare(grid, paths)
        if hasattr(driver, "prepare")
        else _PointwisePrepared(driver, grid, paths)
    )

    Y = np.zeros((J, N + 1))
    Z = np.zeros((J, N, m))
    y_coeffs = [None] * N
    z_coeffs = [None] * N
    deltas = []

    truncation = getattr(driver, "truncation", None)
    clamp_schedule = []

    if scheme == "backward":
        for i in range(N - 1, -1, -1):
            cont_fit, _ = regs[i].fit(Y[:, i + 1])
            resid = Y[:, i + 1] - cont_fit
            fitted_z, cz = regs[i].fit(paths.dW[:, i, :] / dt * resid[:, None])
            Z[:, i, :] = fitted_z
            h = prepared.eval_step(i, Z[:, i, :])
            Y[:, i] = cont_fit - dt * h
            _, cy = regs[i].fit(Y[:, i])
            y_coeffs[i], z_coeffs[i] = cy, cz
        iterations = 1
    elif scheme == "forward":
        H = np.empty((J, N))
        converged = False
        iterations = 0
        max_z_prev = 0.0
        for k in range(1, picard.max_iters + 1):
            iterations = k
            m_k = None if truncation is None else min(truncation, truncation / 128.0 * 2.0 ** (k - 1))
            clamp_schedule.append(m_k)
            for i in range(N):
                H[:, i] = prepared.eval_step(i, clamp_radial(Z[:, i, :], m_k))
            S = -dt * np.cumsum(H[:, ::-1], axis=1)[:, ::-1]
            newY = np.zeros_like(Y)
            for i in range(N):
                newY[:, i], y_coeffs[i] = regs[i].fit(S[:, i])
            newZ = np.empty_like(Z)
            for i in range(N):
                y_next = newY[:, i + 1]
                y_next_fit, _ = regs[i].fit(y_next)
                resid = y_next - y_next_fit
                newZ[:, i, :], z_coeffs[i] = regs[i].fit(paths.dW[:, i, :] / dt * resid[:, None])
            delta = float(np.max(np.abs(newY - Y)))
            deltas.append(delta)
            Y, Z = newY, newZ
            max_z_new = float(np.max(np.linalg.norm(Z, axis=-1))) if N > 0 else 0.0
            clamp_inert = m_k is None or m_k >= truncation or max(max_z_prev, max_z_new) <= m_k / 2.0
            max_z_prev = max_z_new
            if delta < picard.tol and clamp_inert:
                converged = True
                break
        if not converged:
            raise NoConvergence(picard.max_iters, deltas[-1])
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    max_y = float(np.max(np.abs(Y)))
    if max_y > y_bound:
        raise ValueError(f"solution exceeds the Y bound: max|Y| = {max_y:.3e} > {y_bound:.3e}")
    max_abs_z = float(np.max(np.linalg.norm(Z, axis=-1))) if N > 0 else 0.0
    return BsdeSolution(
        grid=grid,
        paths=paths,
        Y=Y,
        Z=Z,
        picard_iterations=iterations,
        deltas=deltas,
        regression_basis_id=basis.id,
        step_bases=step_bases,
        y_coeffs=y_coeffs,
        z_coeffs=z_coeffs,
        truncation=truncation,
        max_abs_z=max_abs_z,
        truncation_flagged=truncation is not None and max_abs_z >= truncation / 2.0,
        clamp_schedule=clamp_schedule,
        driver=driver,
    )
