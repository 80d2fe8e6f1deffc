"""Finite samples of proper geodesic model spaces with exact metrics.

Four models: a segment of the line, a circle with the arc metric, a
Euclidean disk, and a round sphere with great-circle geodesics.  Each
space exposes exact distances and a constant-speed geodesic oracle both
between samples and at arbitrary coordinates, so downstream Hopf-Lax and
trace computations never pay a snapping penalty for geodesic positions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .coefficients import DomainError


class SampledSpace:
    """Base class: `points` is (n, dim) float array, metric is exact."""

    kind: str = "abstract"

    def __init__(self, points: np.ndarray):
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        self.n = self.points.shape[0]

    # ---- metric -----------------------------------------------------
    def d_coords(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def d(self, i, j) -> np.ndarray:
        return self.d_coords(self.points[np.asarray(i)], self.points[np.asarray(j)])

    def d_to_samples(self, p: np.ndarray) -> np.ndarray:
        return self.d_coords(np.broadcast_to(p, self.points.shape), self.points)

    def distance_matrix(self) -> np.ndarray:
        P = self.points
        out = np.empty((self.n, self.n))
        for i in range(self.n):
            out[i] = self.d_to_samples(P[i])
        return out

    # ---- geodesics ----------------------------------------------------
    def geodesic_coords(self, p: np.ndarray, q: np.ndarray, t) -> np.ndarray:
        """Constant-speed geodesic point(s) between coordinates p and q."""
        raise NotImplementedError

    def geodesic(self, i: int, j: int, t) -> np.ndarray:
        return self.geodesic_coords(self.points[i], self.points[j], t)

    def snap(self, p: np.ndarray) -> int:
        return int(np.argmin(self.d_to_samples(np.asarray(p, dtype=float))))

    # ---- discretization bookkeeping -----------------------------------
    @property
    def fill_radius(self) -> float:
        raise NotImplementedError

    def neighbor_pairs(self) -> np.ndarray:
        """Geodesic-adjacent sample pairs, used for level-set crossing
        detection; shape (m, 2) int."""
        raise NotImplementedError


class SegmentSpace(SampledSpace):
    kind = "segment"

    def __init__(self, length: float = 1.0, resolution: int = 101):
        if resolution < 16:
            raise DomainError("resolution must be >= 16")
        self.length = float(length)
        super().__init__(np.linspace(0.0, self.length, resolution))

    def d_coords(self, P, Q):
        return np.abs(np.asarray(P)[..., 0] - np.asarray(Q)[..., 0])

    def geodesic_coords(self, p, q, t):
        t = np.asarray(t, dtype=float)
        x = (1.0 - t) * p[0] + t * q[0]
        return np.stack([x], axis=-1)

    @property
    def fill_radius(self) -> float:
        return 0.5 * self.length / (self.n - 1)

    def neighbor_pairs(self):
        i = np.arange(self.n - 1)
        return np.stack([i, i + 1], axis=1)


class CircleSpace(SampledSpace):
    kind = "circle"

    def __init__(self, circumference: float = 2.0 * math.pi, resolution: int = 100):
        if resolution < 16:
            raise DomainError("resolution must be >= 16")
        self.circumference = float(circumference)
        s = np.arange(resolution) * self.circumference / resolution
        super().__init__(s)

    def d_coords(self, P, Q):
        diff = np.abs(np.asarray(P)[..., 0] - np.asarray(Q)[..., 0])
        return np.minimum(diff, self.circumference - diff)

    def geodesic_coords(self, p, q, t):
        t = np.asarray(t, dtype=float)
        C = self.circumference
        a, b = p[0], q[0]
        delta = (b - a) % C
        if delta > C / 2.0:
            delta -= C  # go the short way; exact antipodes take +C/2
        s = (a + t * delta) % C
        return np.stack([s], axis=-1)

    @property
    def fill_radius(self) -> float:
        return 0.5 * self.circumference / self.n

    def neighbor_pairs(self):
        i = np.arange(self.n)
        return np.stack([i, (i + 1) % self.n], axis=1)


class DiskSpace(SampledSpace):
    """Euclidean disk sampled on a square lattice clipped to the disk.

    The lattice (rather than a polar layout) keeps samples exactly
    collinear along chords, which the transport-ray extraction needs.
    """

    kind = "disk"

    def __init__(self, radius: float = 1.0, resolution: int = 800,
                 points: np.ndarray | None = None):
        self.radius = float(radius)
        if points is None:
            a = self.radius * math.sqrt(math.pi / resolution)
            k = int(math.floor(self.radius / a))
            axis = np.arange(-k, k + 1) * a
            X, Y = np.meshgrid(axis, axis)
            pts = np.stack([X.ravel(), Y.ravel()], axis=1)
            pts = pts[np.hypot(pts[:, 0], pts[:, 1]) <= self.radius + 1e-12]
            self.lattice_step = a
            points = pts
        else:
            points = np.asarray(points, dtype=float)
            dif = points[None, :, :] - points[:, None, :]
            dmat = np.hypot(dif[..., 0], dif[..., 1])
            np.fill_diagonal(dmat, np.inf)
            self.lattice_step = float(dmat.min(axis=1).max())
        super().__init__(points)

    def d_coords(self, P, Q):
        diff = np.asarray(P) - np.asarray(Q)
        return np.hypot(diff[..., 0], diff[..., 1])

    def geodesic_coords(self, p, q, t):
        t = np.asarray(t, dtype=float)[..., None]
        return (1.0 - t) * p + t * q

    @property
    def fill_radius(self) -> float:
        return self.lattice_step / math.sqrt(2.0)

    def neighbor_pairs(self):
        a = self.lattice_step
        pairs = []
        # 4-neighborhood on the lattice
        coords = {tuple(np.round(p / a).astype(int)): i
                  for i, p in enumerate(self.points)}
        for (ix, iy), i in coords.items():
            for dx, dy in ((1, 0), (0, 1)):
                j = coords.get((ix + dx, iy + dy))
                if j is not None:
                    pairs.append((i, j))
        return np.asarray(pairs, dtype=int)


class SphereSpace(SampledSpace):
    """Round sphere sampled on a Fibonacci lattice; great-circle metric."""

    kind = "sphere"

    def __init__(self, radius: float = 1.0, resolution: int = 500):
        if resolution < 16:
            raise DomainError("resolution must be >= 16")
        self.radius = float(radius)
        i = np.arange(resolution, dtype=float)
        golden = (1.0 + math.sqrt(5.0)) / 2.0
        z = 1.0 - (2.0 * i + 1.0) / resolution
        phi = 2.0 * math.pi * i / golden
        r_xy = np.sqrt(np.clip(1.0 - z ** 2, 0.0, None))
        pts = self.radius * np.stack(
            [r_xy * np.cos(phi), r_xy * np.sin(phi), z], axis=1)
        super().__init__(pts)

    def d_coords(self, P, Q):
        dots = np.sum(np.asarray(P) * np.asarray(Q), axis=-1) / self.radius ** 2
        return self.radius * np.arccos(np.clip(dots, -1.0, 1.0))

    def geodesic_coords(self, p, q, t):
        t = np.asarray(t, dtype=float)
        r = self.radius
        u, v = p / r, q / r
        cosang = float(np.clip(np.dot(u, v), -1.0, 1.0))
        ang = math.acos(cosang)
        if ang < 1e-15:
            return np.broadcast_to(p, np.shape(t) + (3,)).copy()
        if math.pi - ang < 1e-12:
            # antipodal: canonical tie-break through a deterministic axis
            axis = self._canonical_axis(u)
            w = np.cross(axis, u)
            w /= np.linalg.norm(w)
        else:
            w = v - cosang * u
            w /= np.linalg.norm(w)
        tt = np.asarray(t, dtype=float)[..., None]
        return r * (np.cos(tt * ang) * u + np.sin(tt * ang) * w)

    @staticmethod
    def _canonical_axis(u: np.ndarray) -> np.ndarray:
        # lexicographically smallest standard basis vector not parallel to u
        for e in np.eye(3):
            if abs(abs(np.dot(e, u)) - 1.0) > 1e-9:
                return e
        raise DomainError("degenerate direction")  # pragma: no cover

    @property
    def fill_radius(self) -> float:
        # Fibonacci lattice cells are near-uniform: area-equivalent radius
        return self.radius * 2.0 / math.sqrt(self.n)

    def neighbor_pairs(self):
        # 6 nearest neighbors per sample
        D = self.distance_matrix()
        np.fill_diagonal(D, np.inf)
        idx = np.argsort(D, axis=1)[:, :6]
        pairs = {(min(i, int(j)), max(i, int(j)))
                 for i in range(self.n) for j in idx[i]}
        return np.asarray(sorted(pairs), dtype=int)


_SPACE_KINDS = {
    "segment": SegmentSpace,
    "circle": CircleSpace,
    "disk": DiskSpace,
    "sphere": SphereSpace,
}


def make_space(kind: str, resolution: int, extent: dict | float | None = None,
               seed: int = 0) -> SampledSpace:
    """Factory with deterministic layouts; `seed` is accepted for config
    echo compatibility (the lattice layouts are deterministic)."""
    if kind not in _SPACE_KINDS:
        raise DomainError(f"unsupported space kind {kind!r}")
    kwargs = {}
    if isinstance(extent, dict):
        kwargs.update(extent)
    elif extent is not None:
        key = {"segment": "length", "circle": "circumference",
               "disk": "radius", "sphere": "radius"}[kind]
        kwargs[key] = float(extent)
    return _SPACE_KINDS[kind](resolution=resolution, **kwargs)


def space_from_json(path) -> SampledSpace:
    """Space spec JSON: {"kind": ..., "resolution": n, "extent": {...}, "seed": k}."""
    with open(path) as fh:
        spec = json.load(fh)
    return make_space(spec["kind"], int(spec["resolution"]),
                      spec.get("extent"), int(spec.get("seed", 0)))


@dataclass
class DiscreteMeasure:
    """Nonnegative weights aligned with a space's sample points."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0.0) or not np.all(np.isfinite(self.weights)):
            raise DomainError("weights must be finite and nonnegative")

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def normalized(self) -> "DiscreteMeasure":
        if self.total <= 0.0:
            raise DomainError("cannot normalize a zero measure")
        return DiscreteMeasure(self.weights / self.total)

    def is_probability(self, tol: float = 1e-12) -> bool:
        return abs(self.total - 1.0) <= tol

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("index,weight\n")
            for i, w in enumerate(self.weights):
                fh.write(f"{i},{w:.17g}\n")

    @staticmethod
    def from_csv(path) -> "DiscreteMeasure":
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        if data.ndim == 1:
            data = data[None, :]
        return DiscreteMeasure(data[:, 1])


def uniform_measure(space: SampledSpace) -> DiscreteMeasure:
    return DiscreteMeasure(np.full(space.n, 1.0 / space.n))


def measure_from_density(space: SampledSpace, values: np.ndarray) -> DiscreteMeasure:
    """Weights proportional to density values times cell mass (trapezoid
    cells for the 1-d kinds, equal cells otherwise), normalized."""
    values = np.asarray(values, dtype=float)
    cells = np.ones(space.n)
    if space.kind == "segment":
        cells = np.full(space.n, space.length / (space.n - 1))
        cells[0] *= 0.5
        cells[-1] *= 0.5
    return DiscreteMeasure(values * cells).normalized()


def deposit(space: SampledSpace, positions: np.ndarray,
            masses: np.ndarray) -> np.ndarray:
    """Mass-preserving deposition of point masses onto the sample.

    1-d kinds split each mass linearly between the two bracketing nodes;
    the other kinds assign to the nearest sample.  Total mass is conserved
    exactly.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    masses = np.asarray(masses, dtype=float)
    out = np.zeros(space.n)
    if space.kind == "segment":
        h = space.length / (space.n - 1)
        xs = positions[:, 0]
        left = np.clip(np.floor(xs / h).astype(int), 0, space.n - 2)
        lam = np.clip(xs / h - left, 0.0, 1.0)
        np.add.at(out, left, masses * (1.0 - lam))
        np.add.at(out, left + 1, masses * lam)
        return out
    if space.kind == "circle":
        h = space.circumference / space.n
        ss = positions[:, 0] % space.circumference
        left = np.floor(ss / h).astype(int) % space.n
        lam = np.clip(ss / h - left, 0.0, 1.0)
        np.add.at(out, left, masses * (1.0 - lam))
        np.add.at(out, (left + 1) % space.n, masses * lam)
        return out
    for p, m in zip(positions, masses):
        out[space.snap(p)] += m
    return out


def signed_distance(space: SampledSpace, f: np.ndarray,
                    zero_tol: float | None = None,
                    lipschitz_tol: float = 1e-9) -> np.ndarray:
    """Signed distance from the zero set of f: dist(x, {f=0}) * sgn(f).

    The zero set combines |f| <= zero_tol samples with sign-change
    crossings on geodesic-adjacent pairs (linear zero along the joining
    geodesic), so level sets between samples are not missed.  The output
    is certified 1-Lipschitz on the sample within tolerance.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (space.n,):
        raise DomainError("potential must be aligned with the sample")
    scale = float(np.abs(f).max())
    if zero_tol is None:
        zero_tol = 1e-9 * max(scale, 1.0)
    zero_coords = [space.points[np.abs(f) <= zero_tol]]
    pairs = space.neighbor_pairs()
    fi, fj = f[pairs[:, 0]], f[pairs[:, 1]]
    crossing = fi * fj < 0.0
    for i, j in pairs[crossing]:
        lam = f[i] / (f[i] - f[j])
        zero_coords.append(space.geodesic(int(i), int(j), float(lam)))
    Z = np.concatenate([np.atleast_2d(z) for z in zero_coords], axis=0)
    if Z.shape[0] == 0:
        raise DomainError("no level set: f has empty zero set on the sample")
    dist = np.empty(space.n)
    for i in range(space.n):
        dist[i] = space.d_coords(
            np.broadcast_to(space.points[i], Z.shape), Z).min()
    u = np.sign(f) * dist
    _certify_lipschitz(space, u, lipschitz_tol)
    return u


def _certify_lipschitz(space: SampledSpace, u: np.ndarray, tol: float) -> None:
    scale = max(float(np.abs(u).max()), 1.0)
    if space.n <= 1500:
        D = space.distance_matrix()
        diff = np.abs(u[:, None] - u[None, :])
        bad = diff - D * (1.0 + tol) - tol * scale
        if bad.max() > 0.0:
            i, j = np.unravel_index(int(np.argmax(bad)), bad.shape)
            raise DomainError(
                f"signed distance failed the 1-Lipschitz certificate at pair ({i},{j})")
    else:
        rng = np.random.default_rng(0)
        idx = rng.integers(0, space.n, size=(20000, 2))
        d = space.d(idx[:, 0], idx[:, 1])
        diff = np.abs(u[idx[:, 0]] - u[idx[:, 1]])
        if np.max(diff - d * (1.0 + tol) - tol * scale) > 0.0:
            raise DomainError("signed distance failed the 1-Lipschitz certificate")


def is_lipschitz(space: SampledSpace, u: np.ndarray, const: float = 1.0,
                 tol: float = 1e-9) -> bool:
    """Check |u(i)-u(j)| <= const*d(i,j)*(1+tol) + tol on sampled pairs."""
    u = np.asarray(u, dtype=float)
    scale = max(float(np.abs(u).max()), 1.0)
    if space.n <= 1500:
        D = space.distance_matrix()
        diff = np.abs(u[:, None] - u[None, :])
        return bool(np.all(diff <= const * D * (1.0 + tol) + tol * scale))
    rng = np.random.default_rng(1)
    idx = rng.integers(0, space.n, size=(20000, 2))
    d = space.d(idx[:, 0], idx[:, 1])
    diff = np.abs(u[idx[:, 0]] - u[idx[:, 1]])
    return bool(np.all(diff <= const * d * (1.0 + tol) + tol * scale))
