"""Transport rays of a 1-Lipschitz guide and ray-wise disintegration.

The transport relation pairs points whose guide gap saturates the metric;
rays are maximal unit-slope chains; a measure disintegrates into per-ray
conditional densities whose CD(K,N) verdicts constitute the needle-level
curvature check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cd1d import CdCheckReport, GridDensity, check_three_point
from .coefficients import CurvatureParams, DomainError, tau, tau_vec
from .spaces import (
    DiscreteMeasure,
    SampledSpace,
    deposit,
    is_lipschitz,
    signed_distance,
)

# pair enumeration above this cost falls back to sampled branching checks
_BRANCH_PAIR_BUDGET = 50_000_000


@dataclass
class Ray:
    """Maximal unit-slope chain: ordered sample indices with arclength."""

    point_indices: np.ndarray
    arclength: np.ndarray
    conditional: GridDensity | None = None
    quotient_weight: float = 0.0

    @property
    def length(self) -> float:
        return float(self.arclength[-1])

    @property
    def n_points(self) -> int:
        return self.point_indices.size


@dataclass
class TransportStructure:
    u: np.ndarray
    ray_tol: float
    gamma: np.ndarray           # directed boolean relation, u(x)-u(y)=d(x,y)
    transport_mask: np.ndarray
    branch_plus: np.ndarray
    branch_minus: np.ndarray
    rays: list[Ray] = field(default_factory=list)
    assignment: dict | None = None   # point index -> [(ray id, fraction)]

    def rays_to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("ray_id,order,point_index,arclength,u_value,conditional_density\n")
            for rid, ray in enumerate(self.rays):
                cond = ray.conditional
                for order, (idx, s) in enumerate(zip(ray.point_indices,
                                                     ray.arclength)):
                    dens = np.nan
                    if cond is not None:
                        dens = float(np.interp(s, cond.grid, cond.values))
                    fh.write(f"{rid},{order},{idx},{s:.17g},"
                             f"{self.u[idx]:.17g},{dens:.17g}\n")


def default_ray_tol(space: SampledSpace) -> float:
    return 3.0 * space.fill_radius


def build_transport_structure(space: SampledSpace, u: np.ndarray,
                              ray_tol: float | None = None) -> TransportStructure:
    """Extract the transport relation, branching masks, and maximal rays.

    Pairs satisfy u(x) - u(y) = d(x,y) within ray_tol; rays grow greedily
    as maximal u-monotone chains stepping to the nearest admissible
    successor, with a per-step collinearity check
    d(p,q) + d(q,r) - d(p,r) <= ray_tol.  Branch points terminate chains.
    """
    u = np.asarray(u, dtype=float)
    if not is_lipschitz(space, u, 1.0, tol=1e-9):
        raise DomainError("guide is not 1-Lipschitz on the sample")
    if ray_tol is None:
        ray_tol = default_ray_tol(space)
    D = space.distance_matrix()
    n = space.n
    gap = u[:, None] - u[None, :]
    gamma = np.abs(gap - D) <= ray_tol
    np.fill_diagonal(gamma, False)
    related = np.abs(np.abs(gap) - D) <= ray_tol    # R_u = Gamma u Gamma^-1
    np.fill_diagonal(related, True)
    transport_mask = gamma.any(axis=1) | gamma.any(axis=0)

    branch_plus = np.zeros(n, dtype=bool)
    branch_minus = np.zeros(n, dtype=bool)
    if not related.all():
        rng = np.random.default_rng(0)
        for x in range(n):
            if not transport_mask[x]:
                continue
            fwd = np.flatnonzero(gamma[x])
            if fwd.size >= 2:
                if fwd.size * fwd.size <= _BRANCH_PAIR_BUDGET // n:
                    sub = related[np.ix_(fwd, fwd)]
                    branch_plus[x] = not sub.all()
                else:
                    zi = rng.choice(fwd, size=256)
                    wi = rng.choice(fwd, size=256)
                    branch_plus[x] = not related[zi, wi].all()
            bwd = np.flatnonzero(gamma[:, x])
            if bwd.size >= 2:
                if bwd.size * bwd.size <= _BRANCH_PAIR_BUDGET // n:
                    sub = related[np.ix_(bwd, bwd)]
                    branch_minus[x] = not sub.all()
                else:
                    zi = rng.choice(bwd, size=256)
                    wi = rng.choice(bwd, size=256)
                    branch_minus[x] = not related[zi, wi].all()

    structure = TransportStructure(u=u, ray_tol=ray_tol, gamma=gamma,
                                   transport_mask=transport_mask,
                                   branch_plus=branch_plus,
                                   branch_minus=branch_minus)
    _grow_rays(space, structure, D)
    return structure


def _grow_rays(space: SampledSpace, st: TransportStructure, D: np.ndarray) -> None:
    """Greedy maximal-chain extraction; interior points are consumed, branch
    points and chain ends stay available as shared endpoints."""
    n = space.n
    gamma = st.gamma
    branch = st.branch_plus | st.branch_minus
    interior_used = np.zeros(n, dtype=bool)
    candidates = np.flatnonzero(st.transport_mask)
    order = candidates[np.argsort(-st.u[candidates])]
    rays: list[Ray] = []

    def step(tail: int, prev: int | None, forward: bool) -> int | None:
        row = gamma[tail] if forward else gamma[:, tail]
        nxt = np.flatnonzero(row & ~interior_used)
        if nxt.size == 0:
            return None
        dists = D[tail, nxt]
        for k in np.argsort(dists):
            q = int(nxt[k])
            if dists[k] <= 0.0:
                continue
            if prev is not None:
                defect = D[prev, tail] + D[tail, q] - D[prev, q]
                if defect > st.ray_tol:
                    continue
            return q
        return None

    for start in order:
        start = int(start)
        if interior_used[start]:
            continue
        chain = [start]
        # forward: decreasing u
        prev = None
        while True:
            tail = chain[-1]
            if branch[tail] and len(chain) > 1:
                break
            q = step(tail, prev, forward=True)
            if q is None:
                break
            prev = tail
            chain.append(q)
        # backward: increasing u
        prev = chain[1] if len(chain) > 1 else None
        while True:
            head = chain[0]
            if branch[head] and len(chain) > 1:
                break
            q = step(head, prev, forward=False)
            if q is None:
                break
            prev = head
            chain.insert(0, q)
        if len(chain) < 2:
            continue
        idx = np.asarray(chain, dtype=int)
        seg = D[idx[:-1], idx[1:]]
        arclength = np.concatenate([[0.0], np.cumsum(seg)])
        interior_used[idx[1:-1]] = True
        rays.append(Ray(point_indices=idx, arclength=arclength))
    st.rays = rays


def disintegrate(space: SampledSpace, measure: DiscreteMeasure,
                 structure: TransportStructure) -> dict:
    """Split the measure over rays and bin per-ray conditional densities.

    Interior points belong to exactly one ray; shared endpoints split their
    mass equally among incident rays.  Conditionals are unit-mass
    GridDensity objects on the ray's arclength interval; quotient weight is
    the ray's (pre-normalization) mass.  Returns a report dict.
    """
    w = np.asarray(measure.weights, dtype=float)
    n = space.n
    incidence: list[list[tuple[int, bool]]] = [[] for _ in range(n)]
    for rid, ray in enumerate(structure.rays):
        idx = ray.point_indices
        incidence[idx[0]].append((rid, False))
        incidence[idx[-1]].append((rid, False))
        for p in idx[1:-1]:
            incidence[p].append((rid, True))

    # interior claims are exclusive (coinciding rays would share interiors)
    for p in range(n):
        interior_claims = [rid for rid, inter in incidence[p] if inter]
        if len(interior_claims) > 1:
            raise DomainError(
                f"overlapping ray interiors at point {p}: rays {interior_claims}")

    ray_mass = np.zeros(len(structure.rays))
    endpoint_split_mass = 0.0
    assignment: dict[int, list[tuple[int, float]]] = {}
    for p in np.flatnonzero(structure.transport_mask):
        inc = incidence[int(p)]
        if not inc:
            continue
        interior = [rid for rid, inter in inc if inter]
        if interior:
            assignment[int(p)] = [(interior[0], 1.0)]
            ray_mass[interior[0]] += w[p]
        else:
            rids = sorted({rid for rid, _ in inc})
            frac = 1.0 / len(rids)
            assignment[int(p)] = [(rid, frac) for rid in rids]
            for rid in rids:
                ray_mass[rid] += frac * w[p]
            if len(rids) > 1:
                endpoint_split_mass += w[p]

    skipped_mass = 0.0
    for rid, ray in enumerate(structure.rays):
        ray.quotient_weight = float(ray_mass[rid])
        masses = np.array([
            w[p] * next(fr for r2, fr in assignment.get(int(p), [(rid, 0.0)])
                        if r2 == rid)
            if any(r2 == rid for r2, _ in assignment.get(int(p), []))
            else 0.0
            for p in ray.point_indices])
        ray.conditional = _bin_conditional(ray, masses)
        if ray.conditional is None:
            skipped_mass += ray.quotient_weight

    total_assigned = float(ray_mass.sum())
    transport_total = float(w[structure.transport_mask].sum())
    structure.assignment = assignment
    return {
        "n_rays": len(structure.rays),
        "reconstruction_error": abs(total_assigned - transport_total),
        "endpoint_split_mass": endpoint_split_mass,
        "skipped_mass": skipped_mass,
        "transport_mass": transport_total,
    }


def _bin_conditional(ray: Ray, masses: np.ndarray) -> GridDensity | None:
    """Mass-preserving first-order deposition onto the ray arclength grid,
    with a cell-averaged fallback for rays too short to interleave."""
    L = ray.length
    if L <= 0.0 or masses.sum() <= 0.0:
        return None
    n_nodes = max(9, ray.n_points)
    grid = np.linspace(0.0, L, n_nodes)
    h = grid[1] - grid[0]
    node_mass = np.zeros(n_nodes)
    pos = ray.arclength
    left = np.clip(np.floor(pos / h).astype(int), 0, n_nodes - 2)
    lam = np.clip(pos / h - left, 0.0, 1.0)
    np.add.at(node_mass, left, masses * (1.0 - lam))
    np.add.at(node_mass, left + 1, masses * lam)
    weights = np.full(n_nodes, h)
    weights[0] = weights[-1] = h / 2.0
    values = node_mass / weights
    if np.any(values[1:-1] <= 0.0):
        # short ray: evaluate the piecewise-constant cell density instead
        edges = np.concatenate([[0.0], 0.5 * (pos[1:] + pos[:-1]), [L]])
        cell_density = masses / np.diff(edges)
        cell_of_node = np.clip(np.searchsorted(edges, grid, side="right") - 1,
                               0, masses.size - 1)
        values = cell_density[cell_of_node]
    dens = GridDensity(0.0, L, values)
    return dens.normalized()


@dataclass
class RayVerdict:
    ray_id: int
    length: float
    mass: float
    report: CdCheckReport | None


@dataclass
class Cd1Report:
    verdicts: list[RayVerdict]
    passing_fraction: float      # mass fraction among checked rays
    checked_mass: float
    skipped_mass: float
    disintegration: dict

    @property
    def passed(self) -> bool:
        return self.passing_fraction >= 1.0


def cd1_check(space: SampledSpace, measure: DiscreteMeasure, guide: np.ndarray,
              params: CurvatureParams, guide_kind: str = "auto",
              samples: int = 2048, tol: float | None = None,
              ray_tol: float | None = None, seed: int = 0) -> Cd1Report:
    """Needle-level curvature check along the rays of a guide.

    guide_kind "lip" treats the array as a 1-Lipschitz guide directly,
    "levelset" builds the signed distance from its zero set first, "auto"
    uses the array when it certifies 1-Lipschitz and falls back to the
    signed distance otherwise.
    """
    guide = np.asarray(guide, dtype=float)
    if guide_kind == "levelset":
        u = signed_distance(space, guide)
    elif guide_kind == "lip":
        u = guide
    elif guide_kind == "auto":
        u = guide if is_lipschitz(space, guide, 1.0) else signed_distance(space, guide)
    else:
        raise DomainError(f"unknown guide kind {guide_kind!r}")
    structure = build_transport_structure(space, u, ray_tol=ray_tol)
    report = disintegrate(space, measure, structure)
    verdicts: list[RayVerdict] = []
    checked_mass = 0.0
    passing_mass = 0.0
    skipped = report["skipped_mass"]
    for rid, ray in enumerate(structure.rays):
        if ray.conditional is None:
            verdicts.append(RayVerdict(rid, ray.length, ray.quotient_weight, None))
            continue
        rep = check_three_point(ray.conditional, params, samples=samples,
                                tol=tol, seed=seed + rid)
        verdicts.append(RayVerdict(rid, ray.length, ray.quotient_weight, rep))
        checked_mass += ray.quotient_weight
        if rep.passed:
            passing_mass += ray.quotient_weight
    frac = passing_mass / checked_mass if checked_mass > 0.0 else 0.0
    return Cd1Report(verdicts=verdicts, passing_fraction=frac,
                     checked_mass=checked_mass, skipped_mass=skipped,
                     disintegration=report)


@dataclass
class McpReport:
    t_grid: np.ndarray
    bin_slack: np.ndarray        # per-t min relative headroom of the bin check
    entropy_slack: np.ndarray    # per-t slack of the entropy scalar
    density_bound_slack: float   # min slack of the two-sided trace bound
    passed: bool
    tolerance: float


def mcp_check(space: SampledSpace, reference: DiscreteMeasure, o: int,
              params: CurvatureParams, t_grid,
              support: np.ndarray | None = None,
              tol: float = 1e-3) -> McpReport:
    """Contraction-onto-a-point check of the measure contraction property.

    mu_0 is the reference conditioned on `support` (default: its full
    support); the set contracts toward o along the geodesic oracle.  Per t
    the binned pushforward inequality is checked as relative headroom per
    cell against reference/mass(A), the entropy scalar inequality as a
    difference, and along every source trace the two-sided density-ratio
    bound over all (s,t) pairs (slack relative to the bound gap).
    """
    m = np.asarray(reference.weights, dtype=float)
    if support is None:
        support = m > 0.0
    support = np.asarray(support, dtype=bool)
    src = np.flatnonzero(support & (m > 0.0))
    mass_A = float(m[src].sum())
    if mass_A <= 0.0:
        raise DomainError("contracted set carries no mass")
    N = params.N
    if params.K > 0.0:
        radius = math.pi * math.sqrt((N - 1.0) / params.K)
        dist_o = space.d(src, np.full(src.size, o))
        if np.any(dist_o > radius + 1e-12):
            raise DomainError("support leaves the comparison ball around o")
    t_grid = np.asarray(t_grid, dtype=float)
    src_mass = m[src] / mass_A                     # mu_0 atoms
    d0 = np.array([float(space.d(int(i), o)) for i in src])
    rho0 = 1.0 / mass_A                            # density of mu_0 vs reference

    bin_slack = np.empty(t_grid.size)
    ent_slack = np.empty(t_grid.size)
    rho_est = np.zeros((t_grid.size + 1, src.size))
    rho_est[0] = rho0
    for k, t in enumerate(t_grid):
        positions = np.stack([space.geodesic(int(i), o, float(t))
                              for i in src])
        coefs = tau_vec(params, 1.0 - float(t), d0) ** N
        dep_tau = deposit(space, positions, src_mass * coefs)
        dep_plain = deposit(space, positions, src_mass)
        hit = dep_tau > 0.0
        ref_cells = m[hit] / mass_A
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = (ref_cells - dep_tau[hit]) / np.where(ref_cells > 0,
                                                        ref_cells, np.inf)
        bin_slack[k] = float(rel.min()) if rel.size else 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            rho_t = np.where(m > 0, dep_plain / np.where(m > 0, m, 1.0), 0.0)
        nearest = np.array([space.snap(p) for p in positions])
        rho_est[k + 1] = rho_t[nearest]
        hit_m = (dep_plain > 0) & (m > 0)
        ent = float(np.sum(rho_t[hit_m] ** (1.0 - 1.0 / N) * m[hit_m]))
        rhs = float(np.sum(tau_vec(params, 1.0 - float(t), d0)
                           * rho0 ** (1.0 - 1.0 / N) * m[src]))
        ent_slack[k] = ent - rhs

    times = np.concatenate([[0.0], t_grid])
    worst = math.inf
    for si in range(src.size):
        for a in range(times.size):
            for b in range(a + 1, times.size):
                s, t = times[a], times[b]
                rs, rt = rho_est[a, si], rho_est[b, si]
                if rs <= 0.0 or rt <= 0.0 or t >= 1.0:
                    continue
                ratio = rt / rs
                lo = tau(params, s / t if t > 0 else 1.0, d0[si] * t) ** N
                up_coef = tau(params, (1.0 - t) / (1.0 - s), d0[si] * (1.0 - s))
                hi = up_coef ** (-N) if up_coef > 0 else math.inf
                gap = max(hi - lo, 1e-300)
                worst = min(worst, (ratio - lo) / gap,
                            (hi - ratio) / gap if math.isfinite(hi) else 1.0)
    ok = (bin_slack.min() >= -tol and ent_slack.min() >= -tol
          and worst >= -tol)
    return McpReport(t_grid=t_grid, bin_slack=bin_slack,
                     entropy_slack=ent_slack,
                     density_bound_slack=float(worst), passed=bool(ok),
                     tolerance=tol)
