"""Experiment configuration: TOML file format, validation, and model building.

The config is nested TOML. Sections: [market] (n, m, r and a coefficient
spec), [utility] (p), [simulation] (T, steps, paths, seed), [solver]
(basis, truncation, picard), and one [[scenarios]] table per risk scenario
(measure var|tvar|lel|generic, alpha, K, tau). All scenarios share the market
and grid. See configs/paper_sec5.toml for the reference experiment.
"""

import os
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .market import MarketModel, constant_coefficients, indicator_drift_coefficients
from .risk import Distortion, RiskParams


@dataclass
class ScenarioConfig:
    name: str
    measure: str
    K: float
    tau: float
    alpha: float = None
    generic_file: str = None


@dataclass
class ExperimentConfig:
    market: dict
    p: float
    T: float
    steps: int
    paths: int
    seed: int
    solver: dict
    scenarios: list
    base_dir: str = "."
    raw: dict = field(default_factory=dict, repr=False)


_MEASURES = ("var", "tvar", "lel", "generic")
_MARKET_KINDS = ("constant", "indicator_drift", "expression")
_SOLVER_DEFAULTS = {
    "basis": "poly",
    "degree": 3,
    "bins": 8,
    "truncation": "auto",
    "picard_tol": 1e-4,
    "picard_max_iters": 30,
}


def load_config(path):
    """Parse and validate a TOML experiment config."""
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config file {path} is not valid TOML: {e}") from e
    return parse_config(raw, base_dir=os.path.dirname(os.path.abspath(path)))


def parse_config(raw, base_dir="."):
    for section in ("market", "utility", "simulation"):
        if section not in raw:
            raise ConfigError(f"config is missing the [{section}] section")
    market = dict(raw["market"])
    kind = market.get("kind")
    if kind not in _MARKET_KINDS:
        raise ConfigError(f"market.kind must be one of {_MARKET_KINDS}, got {kind!r}")
    n = int(market.get("n", 1))
    m = int(market.get("m", n))
    r = float(market.get("r", 0.0))
    if n < 1 or m < n:
        raise ConfigError(f"need 1 <= n <= m, got n={n}, m={m}")
    if r < 0:
        raise ConfigError(f"riskless rate must be >= 0, got r={r}")
    market.update(n=n, m=m, r=r)

    p = float(raw["utility"].get("p", np.nan))
    if not 0.0 < p < 1.0:
        raise ConfigError(f"utility exponent p must lie in (0, 1), got {p}")

    sim = raw["simulation"]
    T = float(sim.get("T", 1.0))
    steps = int(sim.get("steps", 0))
    paths = int(sim.get("paths", 0))
    seed = int(sim.get("seed", 0))
    if T <= 0:
        raise ConfigError(f"horizon T must be > 0, got {T}")
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    if paths < 2:
        raise ConfigError(f"paths must be >= 2, got {paths}")

    solver = dict(_SOLVER_DEFAULTS)
    solver.update(raw.get("solver", {}))
    if solver["basis"] not in ("poly", "indicator"):
        raise ConfigError(f"solver.basis must be 'poly' or 'indicator', got {solver['basis']!r}")
    trunc = solver["truncation"]
    if trunc != "auto" and not (isinstance(trunc, (int, float)) and trunc > 0):
        raise ConfigError(f"solver.truncation must be 'auto' or a positive number, got {trunc!r}")

    scenarios = []
    names = set()
    for sc in raw.get("scenarios", []):
        name = sc.get("name") or sc.get("measure")
        measure = sc.get("measure")
        if measure not in _MEASURES:
            raise ConfigError(f"scenario measure must be one of {_MEASURES}, got {measure!r}")
        if name in names or name == "unconstrained":
            raise ConfigError(f"duplicate or reserved scenario name {name!r}")
        names.add(name)
        K = float(sc.get("K", np.nan))
        tau = float(sc.get("tau", np.nan))
        if not K < 1.0:
            raise ConfigError(f"scenario {name!r}: risk bound K must satisfy K < 1, got {K}")
        if not tau > 0:
            raise ConfigError(f"scenario {name!r}: tau must be > 0, got {tau}")
        alpha = sc.get("alpha")
        generic_file = sc.get("file")
        if measure == "generic":
            if not generic_file:
                raise ConfigError(f"scenario {name!r}: generic measure needs a 'file' entry")
        else:
            if alpha is None or not 0.0 < float(alpha) < 1.0:
                raise ConfigError(
                    f"scenario {name!r}: alpha must lie in (0, 1), got {alpha!r}"
                )
            alpha = float(alpha)
        scenarios.append(
            ScenarioConfig(name=name, measure=measure, K=K, tau=tau, alpha=alpha,
                           generic_file=generic_file)
        )

    return ExperimentConfig(
        market=market, p=p, T=T, steps=steps, paths=paths, seed=seed,
        solver=solver, scenarios=scenarios, base_dir=base_dir, raw=raw,
    )


def build_market(config):
    """MarketModel from the config's market block."""
    mk = config.market
    kind = mk["kind"]
    n, m = mk["n"], mk["m"]
    if kind == "constant":
        mu_vec = np.asarray(mk["mu"], dtype=float).reshape(n)
        sigma_mat = np.asarray(mk["sigma"], dtype=float).reshape(n, m)
        mu, sigma = constant_coefficients(mu_vec, sigma_mat)
    elif kind == "indicator_drift":
        if n != 1 or m != 1:
            raise ConfigError("indicator_drift market requires n = m = 1")
        mu, sigma = indicator_drift_coefficients(
            level=float(mk.get("drift_level", 1.0)),
            band=tuple(mk.get("band", (-1.0, 1.0))),
            sigma_value=float(mk.get("sigma", 1.0)),
        )
    else:
        mu = _expression_field(mk["mu_exprs"], n, m, matrix=False)
        sigma = _expression_field(mk["sigma_exprs"], n, m, matrix=True)
    return MarketModel(n=n, m=m, r=mk["r"], mu=mu, sigma=sigma)


def _expression_field(exprs, n, m, matrix):
    """Coefficient field from numpy expressions over t and the state W.

    Expressions see t (scalar), W (batch of states, shape (J, m)), the
    convenience aliases w1..wm, and numpy as np. Each expression must
    broadcast to (J,).
    """
    if matrix:
        rows = [[compile(e, "<config>", "eval") for e in row] for row in exprs]
        if len(rows) != n or any(len(row) != m for row in rows):
            raise ConfigError(f"sigma_exprs must be an {n} x {m} nested list")
    else:
        rows = [compile(e, "<config>", "eval") for e in exprs]
        if len(rows) != n:
            raise ConfigError(f"mu_exprs must have length {n}")

    def evaluate(t, w):
        w = np.asarray(w, dtype=float)
        batch = w.ndim == 2
        W = w if batch else w[None, :]
        env = {"np": np, "t": t, "W": W}
        for k in range(m):
            env[f"w{k + 1}"] = W[:, k]

        def ev(code):
            val = np.asarray(eval(code, {"__builtins__": {}}, env), dtype=float)
            return np.broadcast_to(val, (W.shape[0],))

        if matrix:
            out = np.stack([np.column_stack([ev(c) for c in row]) for row in rows], axis=1)
        else:
            out = np.column_stack([ev(c) for c in rows])
        return out if batch else out[0]

    return evaluate


def build_distortion(sc, base_dir="."):
    """Distortion object for a scenario config."""
    if sc.measure == "var":
        return Distortion.var(sc.alpha)
    if sc.measure == "tvar":
        return Distortion.tvar(sc.alpha)
    if sc.measure == "lel":
        return Distortion.lel(sc.alpha)
    path = sc.generic_file
    if not os.path.isabs(path):
        path = os.path.join(base_dir, path)
    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1)
    except OSError as e:
        raise ConfigError(f"cannot read distortion file {path}: {e}") from e
    if table.ndim != 2 or table.shape[1] != 2:
        raise ConfigError(f"distortion file {path} must have two columns u,D")
    u, d = table[:, 0], table[:, 1]
    return Distortion.generic(lambda q, u=u, d=d: np.interp(q, u, d))


def build_risk_params(sc, config):
    return RiskParams(r=config.market["r"], tau=sc.tau,
                      distortion=build_distortion(sc, config.base_dir))
