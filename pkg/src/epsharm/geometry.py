"""Charts, log-polar grids, and the embedded round-sphere target.

All fields live on a polar grid: `n_r` radial rings (log-spaced) times
`n_theta` uniform angles. Disk grids (``r_min == 0``) carry a center node as
ring 0, replicated across the angular axis so every array keeps the shape
``(n_r, n_theta, ...)``; constructors and projections keep the replicas
identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import NotTangent, RegionOutOfRange, ZeroVector

PROJECTION_TOL = 1e-12
ZERO_VECTOR_TOL = 1e-14
TANGENCY_TOL = 1e-8


@dataclass(frozen=True)
class PolarGrid:
    """Log-spaced polar discretization of a disk or annulus.

    ``inner_fraction`` sets the first positive radius of a disk grid as a
    fraction of ``r_max``; it is ignored for annuli.
    """

    r_min: float
    r_max: float
    n_r: int
    n_theta: int
    inner_fraction: float = 1e-4

    def __post_init__(self):
        if not (0.0 <= self.r_min < self.r_max):
            raise ValueError(f"need 0 <= r_min < r_max, got [{self.r_min}, {self.r_max}]")
        if self.n_r < 4:
            raise ValueError(f"n_r must be >= 4, got {self.n_r}")
        if self.n_theta < 8 or self.n_theta % 2 != 0:
            raise ValueError(f"n_theta must be even and >= 8, got {self.n_theta}")
        if not (0.0 < self.inner_fraction < 1.0):
            raise ValueError("inner_fraction must lie in (0, 1)")

    @property
    def includes_disk(self) -> bool:
        return self.r_min == 0.0

    @cached_property
    def r(self) -> np.ndarray:
        """Radial node positions, strictly increasing; disk grids start at 0."""
        if self.includes_disk:
            inner = self.r_max * self.inner_fraction
            nodes = np.concatenate(
                [[0.0], np.geomspace(inner, self.r_max, self.n_r - 1)]
            )
        else:
            nodes = np.geomspace(self.r_min, self.r_max, self.n_r)
        nodes.flags.writeable = False
        return nodes

    @cached_property
    def theta(self) -> np.ndarray:
        t = np.arange(self.n_theta) * (2.0 * np.pi / self.n_theta)
        t.flags.writeable = False
        return t

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.n_theta

    @cached_property
    def log_step(self) -> float:
        """Uniform spacing in log r of the positive rings."""
        r = self.r
        pos = r[1:] if self.includes_disk else r
        return float(np.log(pos[1] / pos[0]))

    @cached_property
    def cell_edges(self) -> np.ndarray:
        """Radial cell boundaries; cell i is [edges[i], edges[i+1]].

        Interior boundaries sit at geometric midpoints, so cells tile the
        grid exactly: the union of all cells is [r_min, r_max] (or [0, r_max]).
        """
        r = self.r
        edges = np.empty(self.n_r + 1)
        if self.includes_disk:
            q = math.exp(self.log_step)
            edges[0] = 0.0
            edges[1] = r[1] / math.sqrt(q)
            edges[2:-1] = np.sqrt(r[1:-1] * r[2:])
            edges[-1] = self.r_max
        else:
            edges[0] = self.r_min
            edges[1:-1] = np.sqrt(r[:-1] * r[1:])
            edges[-1] = self.r_max
        edges.flags.writeable = False
        return edges

    @cached_property
    def cell_weights(self) -> np.ndarray:
        """Per-ring quadrature weight: the exact value of ∫ r dr over the cell."""
        e = self.cell_edges
        w = 0.5 * (e[1:] ** 2 - e[:-1] ** 2)
        w.flags.writeable = False
        return w

    def snap_index(self, t: float) -> int:
        """Index of the radial node nearest to t (in log-distance for r > 0)."""
        r = self.r
        lo = r[1] if self.includes_disk else r[0]
        if t <= 0.5 * lo and self.includes_disk:
            return 0
        t = min(max(t, lo), self.r_max)
        pos = r[1:] if self.includes_disk else r
        i = int(np.argmin(np.abs(np.log(pos) - np.log(t))))
        return i + 1 if self.includes_disk else i

    def snap_radius(self, t: float) -> float:
        return float(self.r[self.snap_index(t)])

    def radial_region_weights(self, lo: float, hi: float) -> np.ndarray:
        """Quadrature weights for the annulus [lo, hi] (radii already snapped
        to nodes). Cells overlapping the region boundary are split exactly at
        the boundary, so complementary regions add to the whole grid weight."""
        e = self.cell_edges
        a = np.maximum(e[:-1], lo)
        b = np.minimum(e[1:], hi)
        w = 0.5 * np.maximum(b, a) ** 2 - 0.5 * a**2
        return np.where(b > a, w, 0.0)

    def resolve_region(self, region) -> tuple[float, float, str]:
        """Normalize a region spec to snapped (lo, hi, descriptor).

        Accepts "full", ("ball", t) or ("annulus", p, q). Ball regions require
        a disk grid.
        """
        if region == "full" or region == ("full",):
            lo = 0.0 if self.includes_disk else self.r_min
            return lo, self.r_max, "full"
        kind = region[0]
        if kind == "ball":
            if not self.includes_disk:
                raise RegionOutOfRange("ball region needs a disk grid (r_min == 0)")
            t = region[1]
            if not (0.0 < t <= self.r_max * (1 + 1e-12)):
                raise RegionOutOfRange(f"ball radius {t} outside (0, {self.r_max}]")
            ts = self.snap_radius(t)
            return 0.0, ts, f"ball(r={ts:.12g})"
        if kind == "annulus":
            p, q = region[1], region[2]
            lo_grid = 0.0 if self.includes_disk else self.r_min
            if not (lo_grid <= p < q <= self.r_max * (1 + 1e-12)):
                raise RegionOutOfRange(f"annulus ({p}, {q}) outside grid extent")
            ps, qs = self.snap_radius(p), self.snap_radius(q)
            if ps >= qs:
                raise RegionOutOfRange(f"annulus ({p}, {q}) snaps to empty region")
            return ps, qs, f"annulus(p={ps:.12g},q={qs:.12g})"
        raise RegionOutOfRange(f"unknown region spec {region!r}")

    @cached_property
    def nodes_xy(self) -> tuple[np.ndarray, np.ndarray]:
        """Cartesian coordinates of all nodes, each shaped (n_r, n_theta)."""
        r = self.r[:, None]
        x = r * np.cos(self.theta)[None, :]
        y = r * np.sin(self.theta)[None, :]
        x.flags.writeable = False
        y.flags.writeable = False
        return x, y


@dataclass(frozen=True)
class SphereTarget:
    """Round unit sphere S^(l-1) embedded in R^l."""

    ambient_dim: int = 3
    radius: float = 1.0

    def __post_init__(self):
        if self.ambient_dim < 2:
            raise ValueError("ambient_dim must be >= 2")
        if self.radius != 1.0:
            raise ValueError("only the unit sphere is supported")


def project_to_target(p: np.ndarray) -> np.ndarray:
    """Radial retraction p -> p/|p| (idempotent). Works nodewise on arrays
    whose last axis is the ambient dimension."""
    p = np.asarray(p, dtype=float)
    norms = np.linalg.norm(p, axis=-1, keepdims=True)
    if np.any(norms < ZERO_VECTOR_TOL):
        raise ZeroVector("cannot project a vector of norm < 1e-14")
    return p / norms


def tangent_project(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Project v onto the tangent space of the sphere at u: v - <v,u> u."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    inner = np.sum(u * v, axis=-1, keepdims=True)
    return v - inner * u


def second_fundamental_form(u: np.ndarray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """A(u)(X,Y) = -<X,Y> u for the unit sphere.

    Sign convention: harmonic sphere maps satisfy Δu - A(u)(∇u,∇u) = 0,
    i.e. Δu + |∇u|² u = 0.
    """
    u = np.asarray(u, dtype=float)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    for V in (X, Y):
        nv = np.linalg.norm(V)
        if nv > 0 and abs(float(np.dot(u, V))) > TANGENCY_TOL * nv:
            raise NotTangent("argument vector is not tangent at u")
    return -float(np.dot(X, Y)) * u


@dataclass(frozen=True)
class ConformalChart:
    """Flat chart of radius gamma carrying the conformal factor rho, with the
    metric e^{2 rho} (dx1^2 + dx2^2), sampled on a grid.

    rho_spec records how rho was built (("constant", c) or
    ("radial_poly", coeffs)) so charts can be serialized compactly."""

    grid: PolarGrid
    gamma: float
    rho: np.ndarray  # (n_r, n_theta)
    rho_spec: tuple | None = None

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        if rho.shape != (self.grid.n_r, self.grid.n_theta):
            raise ValueError("rho must be sampled on the full grid")
        if not np.all(np.isfinite(rho)):
            raise ValueError("rho must be finite at every node")
        if self.gamma < self.grid.r_max * (1 - 1e-12):
            raise ValueError("chart radius gamma must cover the grid")
        rho.flags.writeable = False
        object.__setattr__(self, "rho", rho)

    @property
    def rho_at_origin(self) -> float:
        return float(self.rho[0, 0])

    @cached_property
    def e2rho(self) -> np.ndarray:
        a = np.exp(2.0 * self.rho)
        a.flags.writeable = False
        return a

    @cached_property
    def em2rho(self) -> np.ndarray:
        a = np.exp(-2.0 * self.rho)
        a.flags.writeable = False
        return a

    @classmethod
    def flat(cls, grid: PolarGrid, gamma: float | None = None) -> "ConformalChart":
        return cls.constant(grid, 0.0, gamma)

    @classmethod
    def constant(cls, grid: PolarGrid, value: float, gamma: float | None = None) -> "ConformalChart":
        rho = np.full((grid.n_r, grid.n_theta), float(value))
        return cls(grid, gamma if gamma is not None else grid.r_max, rho,
                   rho_spec=("constant", float(value)))

    @classmethod
    def radial_polynomial(cls, grid: PolarGrid, coeffs, gamma: float | None = None) -> "ConformalChart":
        """rho(r) = sum_m coeffs[m] * r^m."""
        r = grid.r
        rho_r = np.zeros_like(r)
        for m, c in enumerate(coeffs):
            rho_r += c * r**m
        rho = np.repeat(rho_r[:, None], grid.n_theta, axis=1)
        return cls(grid, gamma if gamma is not None else grid.r_max, rho,
                   rho_spec=("radial_poly", tuple(float(c) for c in coeffs)))


@dataclass
class MapField:
    """A discrete sphere-valued map on a chart grid: one point of R^l per node."""

    chart: ConformalChart
    values: np.ndarray  # (n_r, n_theta, l)
    target: SphereTarget = field(default_factory=SphereTarget)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        g = self.grid
        if v.ndim != 3 or v.shape[:2] != (g.n_r, g.n_theta):
            raise ValueError("values must have shape (n_r, n_theta, l)")
        if v.shape[2] != self.target.ambient_dim:
            raise ValueError("ambient dimension mismatch with target")
        self.values = v

    @property
    def grid(self) -> PolarGrid:
        return self.chart.grid

    @property
    def ambient_dim(self) -> int:
        return self.values.shape[2]

    def copy(self) -> "MapField":
        return MapField(self.chart, self.values.copy(), self.target)

    def max_constraint_violation(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.values, axis=-1) - 1.0)))

    def project(self) -> "MapField":
        """Renormalize nodewise and re-sync the replicated center row."""
        v = project_to_target(self.values)
        if self.grid.includes_disk:
            center = v[0].mean(axis=0)
            v[0, :] = center / np.linalg.norm(center)
        self.values = v
        return self

    @classmethod
    def from_function(cls, chart: ConformalChart, fn, target: SphereTarget | None = None,
                      project: bool = True) -> "MapField":
        """Sample fn(x, y) -> (..., l) on the grid nodes."""
        x, y = chart.grid.nodes_xy
        vals = np.asarray(fn(x, y), dtype=float)
        if vals.shape[:2] != x.shape:
            raise ValueError("sampler must return one point per node")
        tgt = target if target is not None else SphereTarget(ambient_dim=vals.shape[-1])
        f = cls(chart, vals, tgt)
        if project:
            f.project()
        return f

    @classmethod
    def constant(cls, chart: ConformalChart, point) -> "MapField":
        p = np.asarray(point, dtype=float)
        p = p / np.linalg.norm(p)
        g = chart.grid
        vals = np.tile(p, (g.n_r, g.n_theta, 1))
        return cls(chart, vals, SphereTarget(ambient_dim=p.size))
