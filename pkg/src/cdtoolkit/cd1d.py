"""One-dimensional CD(K,N) density calculus on uniform grids.

A density h on an interval (a,b) is a CD(K,N) density when its (N-1)-th
root is concave with sigma-modulus K; this module checks the defining
three-point inequality, the differential characterization of the log, the
a-priori sup / log-derivative bounds, performs logarithmic mollification,
and generates the model equality-case densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .coefficients import (
    INFINITY,
    CurvatureParams,
    DomainError,
    d_max,
    sigma_vec,
)


@dataclass
class GridDensity:
    """Nonnegative density sampled on a uniform grid over (a, b).

    Endpoint values may vanish (the endpoint convention for ray-conditional
    densities); interior values must be positive for the checks that take
    logarithms.
    """

    a: float
    b: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not (self.a < self.b):
            raise DomainError(f"need a < b, got ({self.a}, {self.b})")
        if self.values.ndim != 1 or self.values.size < 9:
            raise DomainError("values must be a 1-d array with n >= 9")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("values must be finite")
        if np.any(self.values < 0.0):
            raise DomainError("values must be nonnegative")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def step(self) -> float:
        return (self.b - self.a) / (self.n - 1)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.n)

    def mass(self) -> float:
        return float(np.trapz(self.values, dx=self.step))

    def normalized(self) -> "GridDensity":
        m = self.mass()
        if m <= 0.0:
            raise DomainError("cannot normalize a zero-mass density")
        return GridDensity(self.a, self.b, self.values / m)

    def interior_positive(self) -> bool:
        return bool(np.all(self.values[1:-1] > 0.0))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("x,value\n")
            for x, v in zip(self.grid, self.values):
                fh.write(f"{x:.17g},{v:.17g}\n")

    @staticmethod
    def from_csv(path) -> "GridDensity":
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        x, v = data[:, 0], data[:, 1]
        return GridDensity(float(x[0]), float(x[-1]), v)


@dataclass
class MollifierSpec:
    """C^2 bump shape on [-1,1]; rescaled to [-eps,eps] and renormalized."""

    shape: Callable[[np.ndarray], np.ndarray] = field(
        default=lambda u: (1.0 - u ** 2) ** 3
    )
    name: str = "poly-bump-3"


@dataclass
class CdCheckReport:
    """Outcome of a density check: worst signed violation vs tolerance."""

    passed: bool
    worst_violation: float
    worst_witness: tuple[float, float, float]
    tolerance_used: float
    verdict: str = ""

    def __post_init__(self):
        # invariant: passed iff worst violation within tolerance
        assert self.passed == (self.worst_violation <= self.tolerance_used)


def _concavity_coordinate(h: GridDensity, N: float) -> np.ndarray:
    """The coordinate in which CD concavity is linear: h^(1/(N-1)), or log h."""
    if math.isfinite(N):
        return h.values ** (1.0 / (N - 1.0))
    with np.errstate(divide="ignore"):
        return np.log(h.values)


def _lattice_triples(a: float, b: float, n_nodes: int, budget: int,
                     rng: np.random.Generator):
    """Deterministic grid-node triple lattice plus seeded random triples."""
    n_det = budget // 2
    # grid pair count ~ L^2/2 * 3 time values
    L = max(4, int(math.sqrt(2.0 * max(n_det, 1) / 3.0)) + 1)
    idx = np.unique(np.linspace(0, n_nodes - 1, L).astype(int))
    xs = a + idx * (b - a) / (n_nodes - 1)
    x0_list, x1_list, t_list = [], [], []
    for ii in range(len(xs)):
        for jj in range(ii + 1, len(xs)):
            for t in (0.25, 0.5, 0.75):
                x0_list.append(xs[ii])
                x1_list.append(xs[jj])
                t_list.append(t)
    x0 = np.array(x0_list)[:n_det]
    x1 = np.array(x1_list)[:n_det]
    tt = np.array(t_list)[:n_det]
    n_rand = budget - x0.size
    r0 = rng.uniform(a, b, size=n_rand)
    r1 = rng.uniform(a, b, size=n_rand)
    rt = rng.uniform(0.0, 1.0, size=n_rand)
    lo, hi = np.minimum(r0, r1), np.maximum(r0, r1)
    return (np.concatenate([x0, lo]), np.concatenate([x1, hi]),
            np.concatenate([tt, rt]))


def default_three_point_tol(h: GridDensity, params: CurvatureParams) -> float:
    """Tolerance absorbing piecewise-linear interpolation error in the
    concavity coordinate: O(step^2) times the coordinate scale."""
    g = _concavity_coordinate(h, params.N)
    finite = g[np.isfinite(g)]
    scale = float(np.abs(finite).max()) if finite.size else 1.0
    span = h.b - h.a
    return max(1e-9, 10.0 * h.step ** 2 * scale * (1.0 + abs(params.K) * span ** 2))


def check_three_point(h: GridDensity, params: CurvatureParams,
                      samples: int = 4096, tol: float | None = None,
                      seed: int = 0) -> CdCheckReport:
    """Check the defining three-point inequality of a CD(K,N) density.

    Evaluates, over a deterministic lattice plus seeded random triples
    (x0, x1, t), whether

        g(t*x1 + (1-t)*x0) >= sigma^(t)_{K,N-1}(|x1-x0|) g(x1)
                              + sigma^(1-t)_{K,N-1}(|x1-x0|) g(x0)

    with g = h^(1/(N-1)) interpolated piecewise-linearly (the concavity
    coordinate).  For N = inf the logarithmic form with the K/2*t*(1-t)
    quadratic correction is used instead.
    """
    N = params.N
    if tol is None:
        tol = default_three_point_tol(h, params)
    if params.K > 0.0 and math.isfinite(N):
        D = d_max(params, N - 1.0)
        if h.b - h.a > D + 1e-12:
            return CdCheckReport(False, INFINITY, (h.a, h.b, 0.5), tol,
                                 verdict="interval too long")
    rng = np.random.default_rng(seed)
    x0, x1, tt = _lattice_triples(h.a, h.b, h.n, samples, rng)
    xt = tt * x1 + (1.0 - tt) * x0
    theta = x1 - x0
    grid = h.grid
    g = _concavity_coordinate(h, N)

    if math.isfinite(N):
        g0 = np.interp(x0, grid, g)
        g1 = np.interp(x1, grid, g)
        gt = np.interp(xt, grid, g)
        s1 = sigma_vec(params.K, N - 1.0, tt, theta)
        s0 = sigma_vec(params.K, N - 1.0, 1.0 - tt, theta)
        # inf coefficient against an endpoint-vanishing value is vacuous
        # (the endpoint convention); against a genuinely positive value it
        # is an infinite violation
        ztol = 1e-12 * float(np.abs(g).max())
        term1 = np.zeros_like(g1)
        term0 = np.zeros_like(g0)
        inf1, inf0 = np.isinf(s1), np.isinf(s0)
        term1[~inf1] = s1[~inf1] * g1[~inf1]
        term0[~inf0] = s0[~inf0] * g0[~inf0]
        term1[inf1 & (g1 > ztol)] = INFINITY
        term0[inf0 & (g0 > ztol)] = INFINITY
        violation = term1 + term0 - gt
    else:
        if not h.interior_positive():
            raise DomainError("log-form check needs interior-positive h")
        lg0 = np.interp(x0, grid, g)
        lg1 = np.interp(x1, grid, g)
        lgt = np.interp(xt, grid, g)
        rhs = tt * lg1 + (1.0 - tt) * lg0 \
            + 0.5 * params.K * tt * (1.0 - tt) * theta ** 2
        violation = rhs - lgt
        bad = ~np.isfinite(violation)
        violation[bad] = -INFINITY  # -inf endpoints: inequality vacuous

    k = int(np.argmax(violation))
    worst = float(violation[k])
    return CdCheckReport(worst <= tol, worst, (float(x0[k]), float(x1[k]),
                                               float(tt[k])), tol)


def check_differential(h: GridDensity, params: CurvatureParams,
                       tol: float | None = None) -> CdCheckReport:
    """Differential characterization via central differences of log h.

    Reports max over interior nodes (2 .. n-3) of

        (log h)'' + ((log h)')^2/(N-1) + K        (the squared term is
                                                   dropped for N = inf)

    The two excluded cells at each end keep the endpoint-vanishing
    convention from contaminating the logarithm.
    """
    N = params.N
    if tol is None:
        tol = max(1e-9, 50.0 * h.step ** 2 * float(h.values.max()))
    vals = h.values
    if np.any(vals[1:-1] <= 0.0):
        raise DomainError("h must be positive on the tested interior")
    lg = np.log(vals[1:-1])
    dx = h.step
    d1 = (lg[2:] - lg[:-2]) / (2.0 * dx)
    d2 = (lg[2:] - 2.0 * lg[1:-1] + lg[:-2]) / dx ** 2
    if math.isfinite(N):
        lhs = d2 + d1 ** 2 / (N - 1.0)
    else:
        lhs = d2
    slack = lhs + params.K
    k = int(np.argmax(slack))
    worst = float(slack[k])
    x = h.grid[2 + k]
    return CdCheckReport(worst <= tol, worst, (float(x), float(x), 0.0), tol)


def apriori_sup_bound(params: CurvatureParams, a: float, b: float) -> float:
    """Upper bound on sup h for a unit-mass CD(K,N) density on (a,b).

    N/(b-a) when K >= 0; the reciprocal sigma-integral form when K < 0
    (composite quadrature on 1025 nodes).
    """
    if not (b > a):
        raise DomainError(f"need b > a, got ({a}, {b})")
    N = params.N
    if not math.isfinite(N):
        raise DomainError("sup bound requires finite N")
    if params.K >= 0.0:
        return N / (b - a)
    t = np.linspace(0.0, 1.0, 1025)
    vals = sigma_vec(params.K, N - 1.0, t, b - a) ** (N - 1.0)
    integral = float(simpson(vals, x=t))
    return 1.0 / ((b - a) * integral)


def apriori_log_derivative_bounds(params: CurvatureParams, a: float, b: float,
                                  x: float) -> tuple[float, float]:
    """Two-sided bound on (log h)'(x) for a CD(K,N) density on (a,b).

    K > 0 uses sqrt(K(N-1))*cot(d*sqrt(K/(N-1))); K = 0 the (N-1)/d limit;
    K < 0 the coth continuation (library extension beyond the K > 0 case
    written in the source analysis; validated against brute-force densities).
    """
    if not (a < x < b):
        raise DomainError(f"x must lie in ({a}, {b}), got {x}")
    N = params.N
    if not math.isfinite(N):
        raise DomainError("log-derivative bounds require finite N")
    K = params.K
    da, db = x - a, b - x
    if K > 0.0:
        lam = math.sqrt(K / (N - 1.0))
        D = d_max(params, N - 1.0)
        if da >= D or db >= D:
            raise DomainError("distance to an endpoint at/beyond the conjugate length")
        coef = math.sqrt(K * (N - 1.0))
        upper = coef / math.tan(da * lam)
        lower = -coef / math.tan(db * lam)
    elif K == 0.0:
        upper = (N - 1.0) / da
        lower = -(N - 1.0) / db
    else:
        lam = math.sqrt(-K / (N - 1.0))
        coef = math.sqrt(-K * (N - 1.0))
        upper = coef / math.tanh(da * lam)
        lower = -coef / math.tanh(db * lam)
    return lower, upper


def log_mollify(h: GridDensity, eps: float,
                kernel: MollifierSpec | None = None) -> GridDensity:
    """Mollify the logarithm: exp(log h convolved with a C^2 bump).

    Output lives on the eps-shrunk interval; quadrature is trapezoidal on
    the input grid with the discretized kernel renormalized to unit mass,
    so constants are reproduced exactly.
    """
    if kernel is None:
        kernel = MollifierSpec()
    if not (0.0 < eps < (h.b - h.a) / 2.0):
        raise DomainError(f"eps must lie in (0, (b-a)/2), got {eps}")
    if not h.interior_positive():
        raise DomainError("log mollification needs interior-positive h")
    vals = h.values.copy()
    # endpoint zeros are outside every kernel window but keep log finite
    if vals[0] == 0.0:
        vals[0] = vals[1]
    if vals[-1] == 0.0:
        vals[-1] = vals[-2]
    lg = np.log(vals)
    dx = h.step
    m = int(math.ceil(eps / dx - 1e-12))
    if h.n - 2 * m < 9:
        raise DomainError("eps too large for the grid resolution")
    offsets = np.arange(-m, m + 1) * dx
    w = np.where(np.abs(offsets) <= eps, kernel.shape(offsets / eps), 0.0)
    w = w / w.sum()
    smoothed = np.convolve(lg, w[::-1], mode="valid")
    return GridDensity(h.a + m * dx, h.b - m * dx, np.exp(smoothed))


def model_density(kind: str, params: CurvatureParams, a: float, b: float,
                  n: int) -> GridDensity:
    """Equality-case model densities, normalized to unit (trapezoid) mass.

    sphere:     sin^(N-1)(x*sqrt(K/(N-1))), K > 0, (a,b) within the
                conjugate interval
    euclidean:  x^(N-1), K = 0, a >= 0
    hyperbolic: sinh^(N-1)(x*sqrt(-K/(N-1))), K < 0, a >= 0
    """
    N = params.N
    if not math.isfinite(N):
        raise DomainError("model densities require finite N")
    x = np.linspace(a, b, n)
    if kind == "sphere":
        if params.K <= 0.0:
            raise DomainError("sphere model needs K > 0")
        D = d_max(params, N - 1.0)
        if not (0.0 <= a and b <= D + 1e-12):
            raise DomainError(f"(a,b) must lie within (0, {D})")
        lam = math.sqrt(params.K / (N - 1.0))
        vals = np.sin(np.clip(x * lam, 0.0, math.pi)) ** (N - 1.0)
    elif kind == "euclidean":
        if params.K != 0.0:
            raise DomainError("euclidean model needs K = 0")
        if a < 0.0:
            raise DomainError("euclidean model needs a >= 0")
        vals = x ** (N - 1.0)
    elif kind == "hyperbolic":
        if params.K >= 0.0:
            raise DomainError("hyperbolic model needs K < 0")
        if a < 0.0:
            raise DomainError("hyperbolic model needs a >= 0")
        lam = math.sqrt(-params.K / (N - 1.0))
        vals = np.sinh(x * lam) ** (N - 1.0)
    else:
        raise DomainError(f"unknown model kind {kind!r}")
    return GridDensity(a, b, vals).normalized()


def random_cd_density(params: CurvatureParams, a: float, b: float, n: int,
                      seed: int | np.random.Generator = 0,
                      kind: str = "power", pieces: int = 4) -> GridDensity:
    """Seeded random CD(K,N) density on (a,b), normalized to unit mass.

    kind="power" (finite N): h = g^(N-1) where g is the minimum of a few
    positive solutions of g'' + (K/(N-1)) g = 0 -- the sigma-affine
    functions -- so the concavity coordinate is exactly a min of "affine"
    pieces.  kind="logconcave" (N = inf): log h is a concave piecewise
    linear function minus K x^2 / 2.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = np.linspace(a, b, n)
    N = params.N
    if kind == "logconcave" or not math.isfinite(N):
        slopes = np.sort(rng.uniform(-3.0, 3.0, size=pieces))[::-1]
        anchors = rng.uniform(a, b, size=pieces)
        planes = slopes[None, :] * (x[:, None] - anchors[None, :])
        lg = planes.min(axis=1) - 0.5 * params.K * x ** 2
        return GridDensity(a, b, np.exp(lg)).normalized()
    kappa = params.K / (N - 1.0)
    span = b - a
    if params.K > 0.0:
        lam = math.sqrt(kappa)
        if span >= math.pi / lam - 1e-12:
            raise DomainError("interval too long for a positive K generator")
        x0s = rng.uniform(b - math.pi / lam, a, size=pieces)
        amps = rng.uniform(0.5, 2.0, size=pieces)
        g = np.min(amps[None, :] * np.sin(lam * (x[:, None] - x0s[None, :])),
                   axis=1)
    elif params.K == 0.0:
        x0s = rng.uniform(a - 2.0 * span, a - 0.05 * span, size=pieces)
        amps = rng.uniform(0.5, 2.0, size=pieces)
        g = np.min(amps[None, :] * (x[:, None] - x0s[None, :]), axis=1)
    else:
        lam = math.sqrt(-kappa)
        x0s = rng.uniform(a - 2.0 * span, a - 0.05 * span, size=pieces)
        amps = rng.uniform(0.5, 2.0, size=pieces)
        g = np.min(amps[None, :] * np.sinh(lam * (x[:, None] - x0s[None, :])),
                   axis=1)
    if np.any(g <= 0.0):
        raise DomainError("generator produced a nonpositive root profile")
    return GridDensity(a, b, g ** (N - 1.0)).normalized()
