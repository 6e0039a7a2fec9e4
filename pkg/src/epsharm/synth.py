"""Closed-form bubbles, geodesic necks, and glued concentrating sequences.

These are analyzer oracles, not solver outputs: each glued field carries
ground-truth annotations (planted radii, cut radii, neck length, closed-form
energies) against which the detection/decomposition/neck pipeline is checked.

Construction of a glued field at step k, on a disk chart:

    u_k(x) = Rot(s(|x|)) . omega(x / r_k)

where omega is a rational sphere bubble, Rot(s) rotates the target along a
great circle through the bubble's far-field value, and s(r) ramps linearly in
log r from 0 at the bubble cut R*r_k to the planted length L at the outer cut
R0 (clamped outside, one-cell smoothed at the kinks). The bubble's decaying
far-field rides along the rotation, so the neck's angular oscillation dies off
exactly as in a genuine concentrating sequence, and the neck's Dirichlet
energy is 2*pi*L^2 / log(R0/(R r_k)) up to the tail.

Planted lengths:

* eps-family, geodesic mode:   L_k = nu_k * sqrt(e^{-2 rho0} B_omega / pi),
  with nu_k from the schedule (the trichotomy length formula at finite k) and
  B_omega the bubble's full-plane squared-Laplacian mass.
* alpha-family:                2*pi*(L_k/P_k)^2*P_k = 2 (alpha_k - 1) log(1/r_k) E[omega],
  which plants the Dirichlet-identity defect on the neck.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .bubbling import AlphaSchedule, Schedule
from .errors import (
    AntipodalEndpoints,
    IncompatibleEndpoints,
    InvalidDegree,
    PoleOnGrid,
    ScheduleExhaustsGrid,
)
from .geometry import ConformalChart, MapField, PolarGrid, SphereTarget

ENDPOINT_TOL = 1e-8


def inverse_stereographic(x: np.ndarray) -> np.ndarray:
    """R^2 -> S^2: x -> (2 x1, 2 x2, |x|^2 - 1) / (1 + |x|^2); exactly unit."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    r2 = x1**2 + x2**2
    den = 1.0 + r2
    return np.stack([2.0 * x1 / den, 2.0 * x2 / den, (r2 - 1.0) / den], axis=-1)


def _polyval(coeffs: np.ndarray, z: np.ndarray) -> np.ndarray:
    out = np.zeros_like(z)
    for c in coeffs:
        out = out * z + c
    return out


@dataclass(frozen=True)
class RationalBubble:
    """Harmonic sphere bubble from a rational map w = p(z)/q(z), composed with
    the inverse stereographic projection. Coefficients are highest-degree
    first (numpy convention)."""

    p: tuple
    q: tuple = (1.0,)

    def __post_init__(self):
        p = np.trim_zeros(np.asarray(self.p, dtype=complex), "f")
        q = np.trim_zeros(np.asarray(self.q, dtype=complex), "f")
        if p.size == 0 or q.size == 0:
            raise InvalidDegree("zero numerator or denominator")
        object.__setattr__(self, "p", tuple(p))
        object.__setattr__(self, "q", tuple(q))
        if self.degree < 1:
            raise InvalidDegree("bubble degree must be >= 1 (constants are not bubbles)")
        # coprimality: no common roots
        if len(q) > 1:
            roots = np.roots(q)
            vals = np.abs(_polyval(np.asarray(p), roots))
            scale = np.max(np.abs(p)) * np.maximum(1.0, np.abs(roots)) ** (len(p) - 1)
            if np.any(vals < 1e-10 * scale):
                raise InvalidDegree("p and q share a root; reduce the fraction")

    @property
    def degree(self) -> int:
        return max(len(self.p), len(self.q)) - 1

    @classmethod
    def identity(cls) -> "RationalBubble":
        return cls(p=(1.0, 0.0), q=(1.0,))

    @classmethod
    def power(cls, d: int) -> "RationalBubble":
        if d < 1:
            raise InvalidDegree("power map needs d >= 1")
        return cls(p=(1.0,) + (0.0,) * d, q=(1.0,))

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        """Sphere values via the pole-free homogeneous form
        (2 Re(P conj(Q)), 2 Im(P conj(Q)), |P|^2 - |Q|^2) / (|P|^2 + |Q|^2)."""
        z = np.asarray(z, dtype=complex)
        P = _polyval(np.asarray(self.p, dtype=complex), z)
        Q = _polyval(np.asarray(self.q, dtype=complex), z)
        pq = P * np.conj(Q)
        p2, q2 = np.abs(P) ** 2, np.abs(Q) ** 2
        den = p2 + q2
        if np.any(den < 1e-280):
            raise PoleOnGrid("p and q vanish together on a node")
        return np.stack([2 * pq.real / den, 2 * pq.imag / den, (p2 - q2) / den], axis=-1)

    def grad_norm(self, z: np.ndarray) -> np.ndarray:
        """|∇(π^{-1} ∘ w)|(z) = sqrt(8) |p'q - pq'| / (|p|^2 + |q|^2), pole-free."""
        z = np.asarray(z, dtype=complex)
        p = np.asarray(self.p, dtype=complex)
        q = np.asarray(self.q, dtype=complex)
        dp = np.polyder(p) if len(p) > 1 else np.zeros(1, dtype=complex)
        dq = np.polyder(q) if len(q) > 1 else np.zeros(1, dtype=complex)
        W = _polyval(dp, z) * _polyval(q, z) - _polyval(p, z) * _polyval(dq, z)
        den = np.abs(_polyval(p, z)) ** 2 + np.abs(_polyval(q, z)) ** 2
        return math.sqrt(8.0) * np.abs(W) / den

    @cached_property
    def far_field(self) -> np.ndarray:
        dp, dq = len(self.p) - 1, len(self.q) - 1
        if dp > dq:
            return np.array([0.0, 0.0, 1.0])
        if dp < dq:
            return np.array([0.0, 0.0, -1.0])
        w = self.p[0] / self.q[0]
        return inverse_stereographic(np.array([w.real, w.imag]))

    @cached_property
    def _reference_plane(self):
        radii = np.geomspace(1e-5, 1e5, 4096)
        ang = np.arange(256) * (2 * np.pi / 256)
        z = radii[:, None] * np.exp(1j * ang)[None, :]
        return radii, z

    @cached_property
    def max_grad(self) -> float:
        """max |∇ω| over the plane (numeric, dense reference sampling)."""
        _, z = self._reference_plane
        m = float(self.grad_norm(z).max())
        return max(m, float(self.grad_norm(np.zeros(1, dtype=complex))[0]))

    @property
    def dirichlet(self) -> float:
        """Closed form: ∫|∇ω|² = 8π·degree (no 1/2 factor convention)."""
        return 8.0 * math.pi * self.degree

    @cached_property
    def biharmonic(self) -> float:
        """Quadrature oracle for ∫_{R²}|Δω|² = ∫ |∇ω|⁴ (harmonic sphere maps
        have Δω = -|∇ω|² ω); trapezoid in log r on a dense reference grid."""
        radii, z = self._reference_plane
        gm = self.grad_norm(z) ** 4
        ring_mean = gm.mean(axis=1)
        s = np.log(radii)
        return float(2.0 * np.pi * np.trapz(ring_mean * radii**2, s))

    @property
    def detect_radius_factor(self) -> float:
        """Planted detection-convention radius per unit scale: 1/max|∇ω|."""
        return 1.0 / self.max_grad


def bubble_field(bubble: RationalBubble, chart: ConformalChart,
                 scale: float = 1.0) -> tuple[MapField, dict]:
    """Sample ω(x/scale) on the chart grid; returns the field and its
    closed-form energy annotations."""
    x, y = chart.grid.nodes_xy
    z = (x + 1j * y) / scale
    field = MapField(chart, bubble.evaluate(z), SphereTarget(3))
    field.project()
    ann = {
        "degree": bubble.degree,
        "scale": scale,
        "dirichlet": bubble.dirichlet,
        "biharmonic": bubble.biharmonic / scale**2,
        "biharmonic_unit_scale": bubble.biharmonic,
        "far_field": [float(v) for v in bubble.far_field],
        "detect_radius": scale * bubble.detect_radius_factor,
    }
    return field, ann


# ---------------------------------------------------------------------------
# great circles and geodesic necks

@dataclass(frozen=True)
class GreatCircle:
    """Unit-speed great circle s -> a cos s + T sin s with the plane rotation
    Rot(s) fixing the orthogonal complement of span(a, T)."""

    a: np.ndarray
    T: np.ndarray

    @classmethod
    def through(cls, a, b=None, tangent=None) -> "GreatCircle":
        a = np.asarray(a, dtype=float)
        a = a / np.linalg.norm(a)
        if tangent is not None:
            T = np.asarray(tangent, dtype=float)
            T = T - np.dot(T, a) * a
            if np.linalg.norm(T) < 1e-12:
                raise AntipodalEndpoints("tangent is normal to the sphere at a")
            return cls(a, T / np.linalg.norm(T))
        b = np.asarray(b, dtype=float)
        b = b / np.linalg.norm(b)
        T = b - np.dot(b, a) * a
        if np.linalg.norm(T) < 1e-12:
            raise AntipodalEndpoints(
                "endpoints coincide or are antipodal; supply an explicit tangent"
            )
        return cls(a, T / np.linalg.norm(T))

    def point(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.multiply.outer(np.cos(s), self.a) + np.multiply.outer(np.sin(s), self.T)

    def arc_distance_to(self, b) -> float:
        b = np.asarray(b, dtype=float)
        b = b / np.linalg.norm(b)
        c = float(np.clip(np.dot(self.a, b), -1.0, 1.0))
        return math.acos(c)

    def rotate(self, s: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Apply Rot(s) to vectors v; s broadcasts against v's leading axes."""
        va = v @ self.a
        vt = v @ self.T
        cs, sn = np.cos(s), np.sin(s)
        return (
            v
            + ((cs - 1.0) * va - sn * vt)[..., None] * self.a
            + ((cs - 1.0) * vt + sn * va)[..., None] * self.T
        )


def geodesic_neck(chart: ConformalChart, endpoint_a, endpoint_b,
                  length: float | None = None, winding: int = 0,
                  tangent=None) -> MapField:
    """Theta-independent neck on the chart's annulus [r_min, r_max]:
    u(r, theta) = gamma(s(r)) with s linear in log r and total image length
    exactly `length` (default: arc distance plus winding)."""
    g = chart.grid
    if g.includes_disk:
        raise ValueError("geodesic neck lives on an annulus grid")
    a = np.asarray(endpoint_a, dtype=float)
    b = np.asarray(endpoint_b, dtype=float)
    if length is not None and length == 0.0:
        vals = np.tile(a / np.linalg.norm(a), (g.n_r, g.n_theta, 1))
        return MapField(chart, vals, SphereTarget(a.size)).project()
    circle = GreatCircle.through(a, b=b if tangent is None else None, tangent=tangent)
    L = circle.arc_distance_to(b) + 2.0 * math.pi * winding if length is None else float(length)
    s = L * np.log(g.r / g.r_min) / math.log(g.r_max / g.r_min)
    pts = circle.point(s)  # (n_r, l)
    vals = np.repeat(pts[:, None, :], g.n_theta, axis=1)
    return MapField(chart, vals, SphereTarget(a.size)).project()


def neck_dirichlet_closed_form(length: float, p: float, q: float) -> float:
    """Dirichlet energy of a log-linear neck of image length L on A(p, q):
    ∫ |∂_r γ(s(r))|² dx = 2π L² / log(q/p)."""
    return 2.0 * math.pi * length**2 / math.log(q / p)


# ---------------------------------------------------------------------------
# glued sequences

@dataclass(frozen=True)
class GlueSpec:
    """Recipe for a glued concentrating sequence.

    neck_mode "none" leaves the pure rescaled bubble (its own far-field tail
    is the neck); "geodesic" transports the tail along a great circle of the
    planted length. `nu` fixes the trichotomy ratio explicitly; None takes
    the finite-k value from the schedule. The body map is the constant the
    neck ends at (its own value at the concentration point)."""

    bubble: RationalBubble
    schedule: Schedule
    R: float
    R0: float
    neck_mode: str = "geodesic"
    nu: float | None = None
    neck_tangent: tuple = (1.0, 0.0, 0.0)
    alpha_schedule: AlphaSchedule | None = None
    body_value: tuple | None = None

    def __post_init__(self):
        if self.neck_mode not in ("none", "geodesic"):
            raise ValueError("neck_mode must be 'none' or 'geodesic'")
        if self.R <= 1.0:
            raise ValueError("bubble cut R must exceed 1")


@dataclass(frozen=True)
class GlueField:
    field: MapField
    eps: float
    annotations: dict


def _smooth_kinks(s: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """One-cell smoothing of the two clamp corners of the log-linear ramp."""
    out = s.copy()
    interior = (s > lo + 1e-300) & (s < hi - 1e-300)
    idx = np.where(interior)[0]
    for i in (idx[0] - 1, idx[0], idx[-1], idx[-1] + 1) if idx.size else ():
        if 1 <= i < len(s) - 1:
            out[i] = 0.25 * (s[i - 1] + 2.0 * s[i] + s[i + 1])
    return out


def glue_sequence(spec: GlueSpec, chart: ConformalChart) -> list[GlueField]:
    """Build the glued field for every schedule entry (see module docstring).

    Raises ScheduleExhaustsGrid when the bubble cut R*r_k falls below four
    grid cells, and IncompatibleEndpoints when an explicit body value differs
    from the neck's terminal point.
    """
    g = chart.grid
    if not g.includes_disk:
        raise ValueError("glued sequences need a disk chart")
    x, y = g.nodes_xy
    rho0 = chart.rho_at_origin
    omega = spec.bubble
    a = omega.far_field

    alpha_entries = spec.alpha_schedule.entries if spec.alpha_schedule is not None else None
    out: list[GlueField] = []
    for i, entry in enumerate(spec.schedule.entries):
        r_k, eps_k = entry.r, entry.eps
        p, q = spec.R * r_k, spec.R0
        if p < g.r[4]:
            raise ScheduleExhaustsGrid(
                f"bubble cut {p} below four grid cells at k={entry.k}"
            )
        if not p < q <= g.r_max * (1 + 1e-12):
            raise IncompatibleEndpoints(f"cuts ({p}, {q}) do not fit the chart")
        span = math.log(q / p)

        alpha_k = alpha_entries[i].alpha if alpha_entries is not None else None
        if spec.neck_mode == "none":
            L = 0.0
        elif alpha_k is not None:
            # plant the alpha-family Dirichlet defect 2 (alpha-1) log(1/r) E[omega]
            rate = math.sqrt(
                (alpha_k - 1.0) * math.log(1.0 / r_k) * omega.dirichlet / (math.pi * span)
            )
            L = rate * span
        else:
            nu_k = spec.nu if spec.nu is not None else spec.schedule.nu_at(i)
            L = nu_k * math.sqrt(math.exp(-2.0 * rho0) * omega.biharmonic / math.pi)

        z = (x + 1j * y) / r_k
        vals = omega.evaluate(z)
        if L > 0.0:
            circle = GreatCircle.through(a, tangent=np.asarray(spec.neck_tangent, dtype=float))
            with np.errstate(divide="ignore"):
                s = np.clip(L * np.log(np.maximum(g.r, 1e-300) / p) / span, 0.0, L)
            s = _smooth_kinks(s, 0.0, L)
            vals = circle.rotate(s[:, None], vals)
            end = circle.point(np.array([L]))[0]
        else:
            end = a

        if spec.body_value is not None:
            bv = np.asarray(spec.body_value, dtype=float)
            if np.linalg.norm(bv / np.linalg.norm(bv) - end) > 1e-6:
                raise IncompatibleEndpoints("body value does not match the neck endpoint")

        f = MapField(chart, vals, SphereTarget(3)).project()
        mu_k = spec.schedule.mu_at(i)
        nu_val = spec.schedule.nu_at(i)
        ann = {
            "k": entry.k,
            "family": "alpha" if alpha_k is not None else "epsilon",
            "eps": eps_k,
            "alpha": alpha_k,
            "r_k": r_k,
            "x_k": [0.0, 0.0],
            "detect_radius": r_k * omega.detect_radius_factor,
            "R": spec.R,
            "R0": spec.R0,
            "neck_mode": spec.neck_mode,
            "mu_k": mu_k,
            "nu_k": nu_val,
            "neck_length": L,
            "bubble_degree": omega.degree,
            "bubble_dirichlet": omega.dirichlet,
            "bubble_biharmonic": omega.biharmonic,
            "body_value": [float(v) for v in end],
            "body_energy": 0.0,
            "far_field": [float(v) for v in a],
        }
        # construction invariant: curve start matches the bubble far field
        assert float(np.linalg.norm(omega.far_field - a)) <= ENDPOINT_TOL
        out.append(GlueField(field=f, eps=eps_k, annotations=ann))
    return out
