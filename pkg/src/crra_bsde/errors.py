"""Exception types shared across the package."""


class CrraBsdeError(Exception):
    """Base class for all package errors."""


class SingularCovariance(CrraBsdeError):
    """sigma sigma' is numerically singular (condition number above the bound)."""


class NonpositiveInitialWealth(CrraBsdeError):
    """Initial wealth must be strictly positive."""


class NonpositiveWealth(CrraBsdeError):
    """Wealth argument of the value function must be strictly positive."""


class DegenerateDistortion(CrraBsdeError):
    """A generic distortion violates D(0)=0, D(1)=1 or monotonicity."""


class QuadratureFailure(CrraBsdeError):
    """Adaptive quadrature of the distortion integral did not converge."""


class UnboundedDirection(CrraBsdeError):
    """The acceptance set appears unbounded along a ray (K < 1 violated in practice)."""


class NoConvergence(CrraBsdeError):
    """Picard iteration did not reach the tolerance within max_iters."""

    def __init__(self, max_iters, last_delta):
        self.max_iters = max_iters
        self.last_delta = last_delta
        super().__init__(
            f"Picard iteration did not converge in {max_iters} iterations "
            f"(last sup|dY| = {last_delta:.3e})"
        )


class RegressionRankDeficient(CrraBsdeError):
    """Regression design matrix is rank deficient (basis too rich for the path count)."""


class PreimageResidual(CrraBsdeError):
    """Recovered strategy does not reproduce the projected point within tolerance."""


class ConfigError(CrraBsdeError):
    """Experiment configuration failed validation."""
