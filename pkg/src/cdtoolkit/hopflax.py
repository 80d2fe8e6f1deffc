"""Hopf-Lax transform and the temporal theory of interpolating potentials.

All infima are exact minima over the finite sample; the continuum gap is
bounded by Lip(f) * fill_radius and is reported as a discretization budget
inside every certificate.  Geodesic positions are exact model coordinates,
so evaluating a potential along a trace never pays a snapping penalty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import DomainError
from .spaces import SampledSpace

# relative tolerance identifying near-minimizers of the Hopf-Lax problem
VALUE_TOL_SCALE = 1e-10


@dataclass
class LengthField:
    """Per-point minimizer-distance speeds at a fixed time t."""

    ell_minus: np.ndarray
    ell_plus: np.ndarray
    ellbar_minus: np.ndarray
    ellbar_plus: np.ndarray

    @property
    def ell(self) -> np.ndarray:
        return 0.5 * (self.ell_minus + self.ell_plus)

    @property
    def ellbar(self) -> np.ndarray:
        return 0.5 * (self.ellbar_minus + self.ellbar_plus)


@dataclass
class InterpolantFrame:
    t: float
    phi_t: np.ndarray
    phibar_t: np.ndarray
    lengths: LengthField


@dataclass
class GeodesicTrace:
    """One constant-speed geodesic with per-time potential/length samples."""

    i: int
    j: int
    times: np.ndarray
    positions: np.ndarray
    length: float
    phi_t: np.ndarray
    phibar_t: np.ndarray
    ell: np.ndarray
    ell_gap: float
    linear_residual: float
    rho: np.ndarray | None = None


def _hl_min(space: SampledSpace, g: np.ndarray, t: float,
            queries: np.ndarray | None = None):
    """min over samples y of d(x,y)^2/(2t) + g(y), with min/max distances
    among near-minimizers and the tie count.

    Returns (values, d_minus, d_plus, ties); queries=None means all samples.
    """
    if t <= 0.0:
        raise DomainError("Hopf-Lax time must be positive")
    if queries is None:
        queries = space.points
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    m = queries.shape[0]
    values = np.empty(m)
    d_minus = np.empty(m)
    d_plus = np.empty(m)
    ties = np.empty(m, dtype=int)
    for k in range(m):
        dk = space.d_coords(
            np.broadcast_to(queries[k], space.points.shape), space.points)
        obj = dk ** 2 / (2.0 * t) + g
        v = obj.min()
        val_tol = VALUE_TOL_SCALE * (1.0 + abs(v))
        near = obj <= v + val_tol
        dn = dk[near]
        values[k] = v
        d_minus[k] = dn.min()
        d_plus[k] = dn.max()
        ties[k] = int(near.sum())
    return values, d_minus, d_plus, ties


def hopf_lax(space: SampledSpace, f: np.ndarray, t: float,
             queries: np.ndarray | None = None) -> np.ndarray:
    """Q_t f = inf_y d(.,y)^2/(2t) + f(y), exact over the sample."""
    return _hl_min(space, np.asarray(f, dtype=float), t, queries)[0]


def c_transform(space: SampledSpace, psi: np.ndarray) -> np.ndarray:
    """psi^c = inf_y d(.,y)^2/2 - psi(y)."""
    return hopf_lax(space, -np.asarray(psi, dtype=float), 1.0)


def is_c_concave(space: SampledSpace, phi: np.ndarray, tol: float = 1e-9) -> bool:
    """phi is c-concave iff the double transform reproduces it."""
    phi = np.asarray(phi, dtype=float)
    scale = max(1.0, float(np.abs(phi).max()))
    return bool(np.abs(c_transform(space, c_transform(space, phi)) - phi).max()
                <= tol * scale)


def phi_interp(space: SampledSpace, phi: np.ndarray, t: float,
               queries: np.ndarray | None = None):
    """phi_t = -Q_t(-phi) with forward minimizer distances; returns
    (values, ell_minus, ell_plus) where ell = D/t."""
    phi = np.asarray(phi, dtype=float)
    if t == 0.0:
        if queries is not None:
            raise DomainError("t=0 interpolant is only defined on the sample")
        z = np.zeros_like(phi)
        return phi.copy(), z, z
    q, dm, dp, _ = _hl_min(space, -phi, t, queries)
    return -q, dm / t, dp / t


def phibar_interp(space: SampledSpace, phi: np.ndarray, t: float,
                  queries: np.ndarray | None = None,
                  phi_c: np.ndarray | None = None):
    """Time-reversed interpolant Q_{1-t}(-phi^c) with ellbar = D/(1-t)."""
    if phi_c is None:
        phi_c = c_transform(space, phi)
    if t == 1.0:
        if queries is not None:
            raise DomainError("t=1 interpolant is only defined on the sample")
        z = np.zeros_like(phi_c)
        return -phi_c.copy(), z, z
    q, dm, dp, _ = _hl_min(space, -np.asarray(phi_c, dtype=float), 1.0 - t, queries)
    return q, dm / (1.0 - t), dp / (1.0 - t)


def interpolants(space: SampledSpace, phi: np.ndarray, t_grid,
                 phi_c: np.ndarray | None = None,
                 require_c_concave: bool = True) -> list[InterpolantFrame]:
    """Per-time interpolating potentials and length fields on the sample."""
    phi = np.asarray(phi, dtype=float)
    if require_c_concave and not is_c_concave(space, phi):
        raise DomainError("phi failed the c-concavity check")
    if phi_c is None:
        phi_c = c_transform(space, phi)
    frames = []
    for t in np.asarray(t_grid, dtype=float):
        if not (0.0 < t < 1.0):
            raise DomainError("interpolation times must lie in (0,1)")
        pt, lm, lp = phi_interp(space, phi, float(t))
        pb, bm, bp = phibar_interp(space, phi, float(t), phi_c=phi_c)
        frames.append(InterpolantFrame(float(t), pt, pb,
                                       LengthField(lm, lp, bm, bp)))
    return frames


def midpoint_eq_tol(space: SampledSpace, lengths: LengthField) -> float:
    """Equality tolerance for the midpoint set: 10 * fill radius * speed scale."""
    lip = max(float(lengths.ell_plus.max()), float(lengths.ellbar_plus.max()), 1e-12)
    return 10.0 * space.fill_radius * lip


def midpoint_set(space: SampledSpace, phi: np.ndarray, t: float,
                 eq_tol: float | None = None,
                 phi_c: np.ndarray | None = None) -> np.ndarray:
    """Mask of sample points where phibar_t - phi_t vanishes within tolerance
    (the image of optimal geodesics at time t)."""
    if not (0.0 < t < 1.0):
        raise DomainError("midpoint sets live at interior times")
    pt, lm, lp = phi_interp(space, phi, t)
    pb, bm, bp = phibar_interp(space, phi, t, phi_c=phi_c)
    if eq_tol is None:
        eq_tol = midpoint_eq_tol(space, LengthField(lm, lp, bm, bp))
    return (pb - pt) <= eq_tol


def propagated_potential(space: SampledSpace, phi: np.ndarray, s: float,
                         t: float, gap_tol: float | None = None,
                         phi_c: np.ndarray | None = None):
    """Phi_s^t = phi_t + (t-s) ell_t^2/2 where the length is well-defined.

    Returns (values, missing_mask); entries with an ell gap beyond
    tolerance carry NaN and are flagged missing.
    """
    if not (0.0 < s < 1.0 and 0.0 < t < 1.0):
        raise DomainError("s and t must lie in (0,1)")
    pt, lm, lp = phi_interp(space, phi, t)
    if gap_tol is None:
        pb, bm, bp = phibar_interp(space, phi, t, phi_c=phi_c)
        gap_tol = midpoint_eq_tol(space, LengthField(lm, lp, bm, bp))
    ell = 0.5 * (lm + lp)
    missing = (lp - lm) > gap_tol
    values = pt + (t - s) * ell ** 2 / 2.0
    values[missing] = np.nan
    return values, missing


def make_trace(space: SampledSpace, phi: np.ndarray, i: int, j: int,
               times, phi_c: np.ndarray | None = None,
               rigidity_tol: float = 1e-9) -> GeodesicTrace:
    """Build a trace along the geodesic from sample i to sample j.

    Verifies the optimal-pair identity phi(i) + phi^c(j) = d^2/2 and
    records the worst deviation from linear evolution of phi_t along the
    trace (both should be at rounding level for genuinely optimal pairs).
    """
    phi = np.asarray(phi, dtype=float)
    if phi_c is None:
        phi_c = c_transform(space, phi)
    times = np.asarray(times, dtype=float)
    dij = float(space.d(i, j))
    scale = 1.0 + abs(float(phi[i])) + dij ** 2
    residual = abs(phi[i] + phi_c[j] - dij ** 2 / 2.0)
    if residual > rigidity_tol * scale:
        raise DomainError(
            f"pair ({i},{j}) is not optimal: rigidity residual {residual:.3e}")
    positions = space.geodesic_coords(space.points[i], space.points[j], times)
    m = times.size
    phi_vals = np.empty(m)
    phibar_vals = np.empty(m)
    ells = np.empty(m)
    gap = 0.0
    for k, t in enumerate(times):
        if not (0.0 < t < 1.0):
            raise DomainError("trace times must lie in (0,1)")
        pos = positions[k][None, :]
        pt, lm, lp = phi_interp(space, phi, float(t), queries=pos)
        pb, bm, bp = phibar_interp(space, phi, float(t), queries=pos,
                                   phi_c=phi_c)
        phi_vals[k] = pt[0]
        phibar_vals[k] = pb[0]
        variants = np.array([lm[0], lp[0], bm[0], bp[0]])
        ells[k] = variants.mean()
        gap = max(gap, float(variants.max() - variants.min()))
    linear = np.abs(phi_vals - (phi[i] - times * dij ** 2 / 2.0)).max()
    return GeodesicTrace(i=i, j=j, times=times, positions=positions,
                         length=dij, phi_t=phi_vals, phibar_t=phibar_vals,
                         ell=ells, ell_gap=gap, linear_residual=float(linear))


@dataclass
class Certificate:
    name: str
    passed: bool
    slack: float
    tolerance: float
    witnesses: list = field(default_factory=list)
    discretization_budget: float = 0.0

    def to_dict(self) -> dict:
        return {"name": self.name, "pass": self.passed, "slack": self.slack,
                "tolerance": self.tolerance, "witnesses": self.witnesses,
                "discretization_budget": self.discretization_budget}


def _eps_h(space, phi, phi_c, trace, eps):
    """h(t,eps), hbar(t,eps) and the shifted-time length variants along a
    trace: h = 2(phi_{t+eps}(gamma_t) - phi_t(gamma_t) - eps*ell^2/2)."""
    ell2 = trace.length ** 2
    tt = trace.times
    ok = tt + eps < 1.0
    h = np.full(tt.shape, np.nan)
    hbar = np.full(tt.shape, np.nan)
    lshift_m = np.full(tt.shape, np.nan)
    lshift_p = np.full(tt.shape, np.nan)
    bshift_m = np.full(tt.shape, np.nan)
    bshift_p = np.full(tt.shape, np.nan)
    for k, t in enumerate(tt):
        if not ok[k]:
            continue
        pos = trace.positions[k][None, :]
        pt, lm, lp = phi_interp(space, phi, float(t + eps), queries=pos)
        pb, bm, bp = phibar_interp(space, phi, float(t + eps), queries=pos,
                                   phi_c=phi_c)
        h[k] = 2.0 * (pt[0] - trace.phi_t[k] - eps * ell2 / 2.0)
        hbar[k] = 2.0 * (pb[0] - trace.phi_t[k] - eps * ell2 / 2.0)
        lshift_m[k], lshift_p[k] = lm[0], lp[0]
        bshift_m[k], bshift_p[k] = bm[0], bp[0]
    return h, hbar, lshift_m, lshift_p, bshift_m, bshift_p


def temporal_certificates(space: SampledSpace, phi: np.ndarray,
                          traces: list[GeodesicTrace],
                          eps_values=(0.02, 0.05),
                          phi_c: np.ndarray | None = None,
                          third_order_tol: float = 1e-8,
                          probe_points: np.ndarray | None = None,
                          probe_t_grid=None) -> list[Certificate]:
    """Certify the temporal estimates along traces.

    (a) the sqrt(t(1-t))-weighted length Lipschitz bound at probe points
        carrying several midpoint times;
    (b) minimizer-distance monotonicity (exact discretely) and the derived
        difference-quotient bounds -ell_s^2/t <= D(ell^2/2)/Dt <=
        ell_t^2/(1-s);
    (c) the finite-eps third-order inequality, primal and dual;
    (d) monotonicity of t -> h(t,eps) at fixed eps.
    """
    phi = np.asarray(phi, dtype=float)
    if phi_c is None:
        phi_c = c_transform(space, phi)
    certs: list[Certificate] = []
    lip_scale = max([tr.length for tr in traces] + [1e-12])
    budget = space.fill_radius * lip_scale

    # --- (c) + (d): third order along traces -------------------------------
    worst_primal, worst_dual, worst_mono = math.inf, math.inf, math.inf
    wit_p, wit_d, wit_m = [], [], []
    for idx, tr in enumerate(traces):
        if tr.length <= 0.0:
            continue
        ell = tr.length
        ell2 = ell ** 2
        tt = tr.times
        for eps in eps_values:
            h, hbar, lm, lp, bm, bp = _eps_h(space, phi, phi_c, tr, eps)
            valid = np.isfinite(h)
            vi = np.flatnonzero(valid)
            for a_pos in range(len(vi)):
                for b_pos in range(a_pos + 1, len(vi)):
                    ks, kt = vi[a_pos], vi[b_pos]
                    s, t = tt[ks], tt[kt]
                    dt = t - s
                    mono = (h[kt] - h[ks])
                    if mono < worst_mono:
                        worst_mono = mono
                        wit_m = [{"trace": idx, "s": float(s), "t": float(t),
                                  "eps": eps}]
                    quot = (h[kt] - h[ks]) / dt
                    rhs = (s + eps) / (t + eps) * max(
                        (lm[ks] - ell) ** 2, (lp[ks] - ell) ** 2)
                    if quot - rhs < worst_primal:
                        worst_primal = quot - rhs
                        wit_p = [{"trace": idx, "s": float(s), "t": float(t),
                                  "eps": eps}]
                    quot_b = (hbar[kt] - hbar[ks]) / dt
                    rhs_b = (1.0 - t - eps) / (1.0 - s - eps) * max(
                        (bm[kt] - ell) ** 2, (bp[kt] - ell) ** 2)
                    if quot_b - rhs_b < worst_dual:
                        worst_dual = quot_b - rhs_b
                        wit_d = [{"trace": idx, "s": float(s), "t": float(t),
                                  "eps": eps}]
    certs.append(Certificate("third-order-primal", worst_primal >= -third_order_tol,
                             float(worst_primal), third_order_tol, wit_p, budget))
    certs.append(Certificate("third-order-dual", worst_dual >= -third_order_tol,
                             float(worst_dual), third_order_tol, wit_d, budget))
    certs.append(Certificate("h-eps-monotone", worst_mono >= -third_order_tol,
                             float(worst_mono), third_order_tol, wit_m, budget))

    # --- (a) + (b): probe-based length certificates -------------------------
    if probe_points is not None and probe_t_grid is not None:
        probe_points = np.atleast_2d(np.asarray(probe_points, dtype=float))
        tg = np.asarray(probe_t_grid, dtype=float)
        mono_tol = 1e-11 * (1.0 + lip_scale ** 2)
        lip_tol = 20.0 * budget * (1.0 + lip_scale)
        quot_tol = 10.0 * budget * (1.0 + lip_scale ** 2)
        worst_lip, worst_dm, worst_q = math.inf, math.inf, math.inf
        wit_l, wit_dm2, wit_q = [], [], []
        for p_idx in range(probe_points.shape[0]):
            pos = probe_points[p_idx][None, :]
            rows = []
            for t in tg:
                pt, lmm, lpp = phi_interp(space, phi, float(t), queries=pos)
                pb, bmm, bpp = phibar_interp(space, phi, float(t), queries=pos,
                                             phi_c=phi_c)
                rows.append((float(t), pt[0], pb[0], lmm[0], lpp[0], bmm[0],
                             bpp[0]))
            gaps = np.array([r[2] - r[1] for r in rows])
            lplus = np.array([r[4] for r in rows])
            bplus = np.array([r[6] for r in rows])
            lf = LengthField(np.array([r[3] for r in rows]), lplus,
                             np.array([r[5] for r in rows]), bplus)
            eq_tol = midpoint_eq_tol(space, lf)
            flagged = np.flatnonzero(gaps <= eq_tol)
            for a_pos in range(len(tg)):
                for b_pos in range(a_pos + 1, len(tg)):
                    s, t = tg[a_pos], tg[b_pos]
                    # exact minimizer-distance monotonicity
                    dm_gap = min(t * rows[b_pos][3] - s * rows[a_pos][4],
                                 (1.0 - s) * rows[a_pos][5]
                                 - (1.0 - t) * rows[b_pos][6])
                    if dm_gap < worst_dm:
                        worst_dm = dm_gap
                        wit_dm2 = [{"probe": p_idx, "s": float(s), "t": float(t)}]
            for a_pos_i in range(len(flagged)):
                for b_pos_i in range(a_pos_i + 1, len(flagged)):
                    ka, kb = flagged[a_pos_i], flagged[b_pos_i]
                    s, t = tg[ka], tg[kb]
                    es = 0.5 * (rows[ka][3] + rows[ka][4])
                    et = 0.5 * (rows[kb][3] + rows[kb][4])
                    lhs = abs(math.sqrt(t * (1 - t)) * et
                              - math.sqrt(s * (1 - s)) * es)
                    rhs = math.sqrt(max(es * et, 0.0)) * abs(
                        math.sqrt(t * (1 - s)) - math.sqrt(s * (1 - t)))
                    if rhs - lhs < worst_lip:
                        worst_lip = rhs - lhs
                        wit_l = [{"probe": p_idx, "s": float(s), "t": float(t)}]
                    quot = (et ** 2 - es ** 2) / (2.0 * (t - s))
                    margin = min(quot + es ** 2 / t, et ** 2 / (1.0 - s) - quot)
                    if margin < worst_q:
                        worst_q = margin
                        wit_q = [{"probe": p_idx, "s": float(s), "t": float(t)}]
        if math.isfinite(worst_lip):
            certs.append(Certificate("ell-lipschitz", worst_lip >= -lip_tol,
                                     float(worst_lip), lip_tol, wit_l, budget))
        if math.isfinite(worst_dm):
            certs.append(Certificate("minimizer-distance-monotone",
                                     worst_dm >= -mono_tol, float(worst_dm),
                                     mono_tol, wit_dm2, budget))
        if math.isfinite(worst_q):
            certs.append(Certificate("ell-quotient-bounds", worst_q >= -quot_tol,
                                     float(worst_q), quot_tol, wit_q, budget))
    return certs


@dataclass
class ZFunctionReport:
    times: np.ndarray
    z: np.ndarray               # z_c(t) = d/dtau ell_tau^2/2 at tau=t
    L: np.ndarray               # exp(-cumulative trapezoid of z / ell^2)
    concavity_slack: float      # min midpoint gap of L (>= -tol passes)
    two_point_slack: float      # min slack of the two-point z inequality
    delta: float


def z_function(space: SampledSpace, phi: np.ndarray, trace: GeodesicTrace,
               delta: float = 0.02,
               phi_c: np.ndarray | None = None) -> ZFunctionReport:
    """Estimate z(t) = d/dtau ell_tau^2/2 (gamma_t) by symmetric differences
    and certify concavity of L and the two-point z inequality."""
    if trace.length <= 0.0:
        raise DomainError("z is undefined on a null geodesic")
    if phi_c is None:
        phi_c = c_transform(space, phi)
    tt = trace.times
    if tt.min() - delta <= 0.0 or tt.max() + delta >= 1.0:
        raise DomainError("trace times must keep delta clearance inside (0,1)")
    z = np.empty(tt.size)
    for k, t in enumerate(tt):
        pos = trace.positions[k][None, :]
        vals = []
        for tau in (t - delta, t + delta):
            _, lm, lp = phi_interp(space, phi, float(tau), queries=pos)
            vals.append((0.5 * (lm[0] + lp[0])) ** 2 / 2.0)
        z[k] = (vals[1] - vals[0]) / (2.0 * delta)
    ell2 = trace.length ** 2
    # cumulative trapezoid anchored at the first time
    incr = 0.5 * (z[1:] + z[:-1]) * np.diff(tt)
    logL = np.concatenate([[0.0], -np.cumsum(incr) / ell2])
    L = np.exp(logL)
    mid = L[1:-1] - 0.5 * (L[:-2] + L[2:])
    concavity = float(mid.min()) if mid.size else 0.0
    worst = math.inf
    for a in range(tt.size):
        for b in range(a + 1, tt.size):
            s, t = tt[a], tt[b]
            quot = (z[b] - z[a]) / (t - s)
            rhs = math.sqrt(s / t * (1 - t) / (1 - s)) * abs(z[a]) * abs(z[b]) / ell2
            worst = min(worst, quot - rhs)
    return ZFunctionReport(times=tt, z=z, L=L, concavity_slack=concavity,
                           two_point_slack=float(worst), delta=delta)
