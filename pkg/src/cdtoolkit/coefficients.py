"""Distortion coefficients of the constant-curvature comparison spaces.

Closed-form sigma/tau coefficients, the conjugate length beyond which the
sigma coefficient degenerates to +inf, and a finite-difference residual for
the second-order ODE that characterizes sigma.  All scalars are IEEE
doubles; +inf is a legal value, NaN never is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

INFINITY = math.inf

# sine denominators below this are flagged as ill-conditioned (near-conjugate)
CONJUGATE_DENOM_TOL = 1e-12


class DomainError(ValueError):
    """An argument left the mathematical domain of an operation."""


@dataclass(frozen=True)
class CurvatureParams:
    """Curvature lower bound K (units 1/length^2) and dimension bound N.

    N must be >= 1 or math.inf; N == 1 is admitted only for the special-case
    tau branch, every verification suite uses N > 1.
    """

    K: float
    N: float

    def __post_init__(self):
        if not math.isfinite(self.K):
            raise DomainError(f"K must be finite, got {self.K}")
        if not (self.N >= 1.0):
            raise DomainError(f"N must be >= 1 or INFINITY, got {self.N}")

    @property
    def n_finite(self) -> bool:
        return math.isfinite(self.N)


def ext_mul(a: float, b: float) -> float:
    """Multiply extended reals; inf * 0 is a domain error, never NaN."""
    if (math.isinf(a) and b == 0.0) or (math.isinf(b) and a == 0.0):
        raise DomainError("inf * 0 is undefined in the coefficient calculus")
    return a * b


def d_max(params: CurvatureParams, calN: float) -> float:
    """Maximal length before conjugacy: pi/sqrt(K/calN) if K > 0, else +inf."""
    if not (calN > 0.0):
        raise DomainError(f"calN must be positive or INFINITY, got {calN}")
    if params.K > 0.0 and math.isfinite(calN):
        return math.pi / math.sqrt(params.K / calN)
    return INFINITY


def sigma(params: CurvatureParams, calN: float, t: float, theta: float) -> float:
    """sigma^(t)_{K,calN}(theta): sin/sinh ratio, t in the flat/infinite case.

    Returns +inf when K > 0 and theta >= d_max(K, calN).
    """
    if not (0.0 <= t <= 1.0):
        raise DomainError(f"t must lie in [0,1], got {t}")
    if not (theta >= 0.0):
        raise DomainError(f"theta must be nonnegative, got {theta}")
    K = params.K
    if theta == 0.0 or K == 0.0 or not math.isfinite(calN):
        return t
    if K > 0.0:
        # fused: evaluate the argument once so sigma(t=1) == 1 exactly
        arg = theta * math.sqrt(K / calN)
        if arg >= math.pi:
            return INFINITY
        return math.sin(t * arg) / math.sin(arg)
    arg = theta * math.sqrt(-K / calN)
    return math.sinh(t * arg) / math.sinh(arg)


def sigma_vec(K: float, calN: float, t, theta) -> np.ndarray:
    """Vectorized sigma over broadcastable arrays of t and theta."""
    t = np.asarray(t, dtype=float)
    theta = np.asarray(theta, dtype=float)
    t, theta = np.broadcast_arrays(t, theta)
    out = np.array(t, dtype=float, copy=True)
    if K == 0.0 or not math.isfinite(calN):
        return out
    lam = math.sqrt(abs(K) / calN)
    arg = theta * lam
    nz = theta > 0.0
    if K > 0.0:
        conj = nz & (arg >= math.pi)
        reg = nz & ~conj
        out[conj] = INFINITY
        out[reg] = np.sin(t[reg] * arg[reg]) / np.sin(arg[reg])
    else:
        out[nz] = np.sinh(t[nz] * arg[nz]) / np.sinh(arg[nz])
    return out


def near_conjugate(params: CurvatureParams, calN: float, theta: float,
                   tol: float = CONJUGATE_DENOM_TOL) -> bool:
    """Conditioning flag: sine denominator of sigma below tol."""
    if params.K <= 0.0 or not math.isfinite(calN) or theta == 0.0:
        return False
    arg = theta * math.sqrt(params.K / calN)
    if arg >= math.pi:
        return True
    return abs(math.sin(arg)) < tol


def tau(params: CurvatureParams, t: float, theta: float) -> float:
    """tau^(t)_{K,N}(theta) = t^(1/N) * sigma^(t)_{K,N-1}(theta)^(1-1/N).

    N == 1 special case: t if K <= 0, +inf if K > 0.
    """
    if not (0.0 <= t <= 1.0):
        raise DomainError(f"t must lie in [0,1], got {t}")
    if not (theta >= 0.0):
        raise DomainError(f"theta must be nonnegative, got {theta}")
    N = params.N
    if N == 1.0:
        return t if params.K <= 0.0 else INFINITY
    if not math.isfinite(N) or params.K == 0.0 or theta == 0.0:
        return t  # sigma degenerates to t, and t^(1/N) t^(1-1/N) = t exactly
    s = sigma(params, N - 1.0, t, theta)
    if math.isinf(s):
        return INFINITY if t > 0.0 else 0.0
    return t ** (1.0 / N) * s ** (1.0 - 1.0 / N)


def tau_vec(params: CurvatureParams, t: float, theta) -> np.ndarray:
    """Vectorized tau at fixed interpolation time t over an array of theta."""
    theta = np.asarray(theta, dtype=float)
    N = params.N
    if N == 1.0:
        fill = t if params.K <= 0.0 else INFINITY
        return np.full(theta.shape, fill)
    if not math.isfinite(N):
        return np.full(theta.shape, float(t))
    s = sigma_vec(params.K, N - 1.0, t, theta)
    out = np.empty_like(s)
    inf_mask = np.isinf(s)
    out[inf_mask] = INFINITY if t > 0.0 else 0.0
    reg = ~inf_mask
    out[reg] = t ** (1.0 / N) * s[reg] ** (1.0 - 1.0 / N)
    return out


def sigma_ode_residual(params: CurvatureParams, calN: float, theta: float,
                       grid: int | np.ndarray) -> float:
    """Max abs central-difference residual of sigma'' + theta^2*(K/calN)*sigma = 0.

    `grid` is a node count or a uniform t-grid on [0,1] with >= 5 interior
    points.  Boundary deviations |sigma(0)|, |sigma(1)-1| participate in the
    returned maximum.  Raises if theta >= d_max (infinite values).
    """
    if isinstance(grid, (int, np.integer)):
        tgrid = np.linspace(0.0, 1.0, int(grid))
    else:
        tgrid = np.asarray(grid, dtype=float)
        steps = np.diff(tgrid)
        if steps.size and not np.allclose(steps, steps[0], rtol=1e-12, atol=1e-12):
            raise DomainError("t grid must be uniform")
    if tgrid.size < 7:
        raise DomainError("need at least 5 interior grid points")
    if theta >= d_max(params, calN):
        raise DomainError("theta at/beyond the conjugate length: sigma is infinite")
    h = tgrid[1] - tgrid[0]
    vals = sigma_vec(params.K, calN, tgrid, theta)
    modulus = theta ** 2 * params.K / calN if math.isfinite(calN) else 0.0
    second = (vals[2:] - 2.0 * vals[1:-1] + vals[:-2]) / h ** 2
    residual = np.abs(second + modulus * vals[1:-1]).max()
    boundary = max(abs(vals[0]), abs(vals[-1] - 1.0))
    return float(max(residual, boundary))
