import numpy as np
import pytest

from crra_bsde import (
    ConstraintSpec,
    Distortion,
    MarketModel,
    RiskParams,
    TimeGrid,
    constant_coefficients,
    indicator_drift_coefficients,
)

TAU = 1.0 / 15.0


@pytest.fixture
def unit_market():
    """Constant 1D market: mu = 1, sigma = 1, r = 0."""
    mu, sigma = constant_coefficients([1.0], [[1.0]])
    return MarketModel(n=1, m=1, r=0.0, mu=mu, sigma=sigma)


@pytest.fixture
def sec5_market():
    """Indicator-drift market: mu = 1 inside |W| <= 1, sigma = 1, r = 0."""
    mu, sigma = indicator_drift_coefficients()
    return MarketModel(n=1, m=1, r=0.0, mu=mu, sigma=sigma)


@pytest.fixture
def diag2_market():
    """Constant 2D market with sigma = diag(1, 2), mu = (1, 2)."""
    mu, sigma = constant_coefficients([1.0, 2.0], [[1.0, 0.0], [0.0, 2.0]])
    return MarketModel(n=2, m=2, r=0.0, mu=mu, sigma=sigma)


def make_risk(kind, alpha=0.10, r=0.0, tau=TAU):
    dist = getattr(Distortion, kind)(alpha)
    return RiskParams(r=r, tau=tau, distortion=dist)


def make_spec(kind="tvar", alpha=0.10, K=0.3, mu=(1.0,), sigma=((1.0,),), r=0.0, tau=TAU):
    return ConstraintSpec(params=make_risk(kind, alpha, r, tau), K=K,
                          mu=np.asarray(mu), sigma=np.asarray(sigma))


@pytest.fixture
def sec5_tvar_spec():
    return make_spec("tvar")


@pytest.fixture
def sec5_var_spec():
    return make_spec("var")
