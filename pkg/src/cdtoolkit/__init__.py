"""cdtoolkit: numerical certification of curvature-dimension inequalities.

The library verifies, on desk-scale sampled model spaces where ground truth
is analytic or brute-forceable, the full chain of computable constructs:
distortion coefficients, one-dimensional CD(K,N) density calculus,
Hopf-Lax temporal estimates, transport-ray disintegration, discrete W2
entropy convexity, and the concave-times-density factorization of inverse
transport densities.
"""

from .coefficients import (
    INFINITY,
    CurvatureParams,
    DomainError,
    d_max,
    sigma,
    sigma_ode_residual,
    tau,
)
from .cd1d import (
    CdCheckReport,
    GridDensity,
    apriori_log_derivative_bounds,
    apriori_sup_bound,
    check_differential,
    check_three_point,
    log_mollify,
    model_density,
    random_cd_density,
)

__version__ = "0.1.0"

__all__ = [
    "INFINITY",
    "CurvatureParams",
    "DomainError",
    "d_max",
    "sigma",
    "sigma_ode_residual",
    "tau",
    "GridDensity",
    "CdCheckReport",
    "check_three_point",
    "check_differential",
    "apriori_sup_bound",
    "apriori_log_derivative_bounds",
    "log_mollify",
    "model_density",
    "random_cd_density",
]
