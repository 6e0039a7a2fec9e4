"""Concentration analysis for sequences of sphere-valued maps.

Covers: detection of the energy-concentration point and blow-up radius,
rescaling windows, the two classifying ratios

    mu_k = (eps_k / r_k^2) log(1/r_k),      nu_k = sqrt(eps_k / r_k^2) log(1/r_k),

the intrinsic criterion eps_k B_k log B_k with B_k the total squared-Laplacian
mass, the body/bubble/neck energy decomposition with its predicted neck
defect, and the neck geometry (oscillation, circle-average curve, intrinsic
length, geodesic deviation).

Conventions. The blow-up radius is only determined up to a bounded factor; the
zero/positive/infinite classification of mu and nu is invariant under such
rescaling, but finite values are not, so the pipeline pairs mu/nu with the
bubble biharmonic energy measured in the SAME normalization (their product is
parametrization-invariant). When a schedule is attached, its radii take
precedence over detected radii. One concentration point per run; multi-point
inputs are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import calculus as calc
from . import energy as en
from .errors import (
    ConstantField,
    DegenerateBubble,
    InvalidMu,
    MultipleConcentrations,
    RegionOutOfRange,
    UnsupportedForm,
    ViolatesCorollaryBound,
    WindowOutOfChart,
)
from .geometry import ConformalChart, MapField, PolarGrid

REGIME_NO_NECK = "NoNeck"
REGIME_GEODESIC = "GeodesicNeck"
REGIME_INFINITE = "InfiniteNeck"
REGIME_UNCLASSIFIED = "Unclassified"


# ---------------------------------------------------------------------------
# schedules and the mu/nu classifier

@dataclass(frozen=True)
class ScheduleEntry:
    k: int
    eps: float
    r: float
    x: tuple = (0.0, 0.0)


@dataclass(frozen=True)
class PowerLogForm:
    """eps_k = coeff * r_k^a * log^b(1/r_k), the supported analytic family.

    a >= 2 keeps eps_k/r_k^2 from blowing up polynomially; b is any integer.
    """

    a: float
    b: int
    coeff: float = 1.0

    def __post_init__(self):
        if self.a < 2:
            raise UnsupportedForm("analytic family needs a >= 2")
        if self.coeff <= 0:
            raise UnsupportedForm("analytic family needs coeff > 0")

    def eps_of(self, r: float) -> float:
        return self.coeff * r**self.a * math.log(1.0 / r) ** self.b


def _r_of_k(r_rule, k: int) -> float:
    kind = r_rule[0]
    if kind == "dyadic":
        return 2.0 ** (-(k + r_rule[1]))
    if kind == "exp":
        return math.exp(-float(k))
    if kind == "power":
        return float(k) ** (-r_rule[1])
    raise UnsupportedForm(f"unknown radius rule {r_rule!r}")


@dataclass(frozen=True)
class Schedule:
    """The sequence (k, eps_k, r_k, x_k), optionally backed by a closed form."""

    entries: tuple
    analytic: PowerLogForm | None = None
    r_rule: tuple | None = None

    def __post_init__(self):
        es = self.entries
        if not all(e.eps > 0 and 0 < e.r < 1 for e in es):
            raise ValueError("schedule needs eps_k > 0 and 0 < r_k < 1")
        if any(b.eps >= a.eps or b.r >= a.r for a, b in zip(es, es[1:])):
            raise ValueError("schedule must be strictly decreasing in eps and r")

    @classmethod
    def power_log(cls, a: float, b: int, coeff: float = 1.0,
                  k_range=range(1, 6), r_rule=("dyadic", 3)) -> "Schedule":
        form = PowerLogForm(a, b, coeff)
        entries = tuple(
            ScheduleEntry(k, form.eps_of(_r_of_k(r_rule, k)), _r_of_k(r_rule, k))
            for k in k_range
        )
        return cls(entries, analytic=form, r_rule=r_rule)

    def mu_at(self, idx: int) -> float:
        e = self.entries[idx]
        return (e.eps / e.r**2) * math.log(1.0 / e.r)

    def nu_at(self, idx: int) -> float:
        e = self.entries[idx]
        return math.sqrt(e.eps) / e.r * math.log(1.0 / e.r)


def trend_flag(vals) -> str:
    """Crude Richardson-style trend of a positive sequence:
    'converging', 'diverging', or 'indeterminate'."""
    v = np.asarray(vals, dtype=float)
    if len(v) < 3:
        return "indeterminate"
    d = np.abs(np.diff(v))
    shrinking = bool(np.all(d[1:] <= d[:-1] * (1 + 1e-9)) or d[-1] < 1e-12 * max(1.0, v[-1]))
    if shrinking:
        return "converging"
    growing = bool(np.all(np.diff(v) > 0) and d[-1] >= d[0])
    if growing:
        return "diverging"
    return "indeterminate"


@dataclass(frozen=True)
class MuNuResult:
    mu: float
    nu: float
    regime: str
    source: str          # "analytic" | "finite"
    mu_trend: str = ""
    nu_trend: str = ""


def classify_regime(nu: float) -> str:
    if nu == 0.0:
        return REGIME_NO_NECK
    if math.isinf(nu):
        return REGIME_INFINITE
    if nu > 1.0:
        return REGIME_GEODESIC
    return REGIME_UNCLASSIFIED    # the (0, 1] band is not covered by the trichotomy


def mu_nu(schedule: Schedule) -> MuNuResult:
    """Classify a schedule. Analytic forms are resolved to exact limits;
    finite data reports the last-entry values plus a trend flag.

    Raises ViolatesCorollaryBound when mu diverges: such schedules are not
    realizable by concentrating sequences with bounded energy.
    """
    form = schedule.analytic
    if form is not None:
        # mu = lim coeff * r^(a-2) * log^(b+1)(1/r),  nu = lim sqrt(coeff) * r^((a-2)/2) * log^(b/2+1)
        if form.a > 2:
            mu, nu = 0.0, 0.0
        else:
            if form.b > -1:
                raise ViolatesCorollaryBound(
                    f"(eps/r^2)log(1/r) diverges for a=2, b={form.b}"
                )
            mu = form.coeff if form.b == -1 else 0.0
            if form.b > -2:
                nu = math.inf
            elif form.b == -2:
                nu = math.sqrt(form.coeff)
            else:
                nu = 0.0
        return MuNuResult(mu, nu, classify_regime(nu), "analytic")

    if len(schedule.entries) < 5:
        raise UnsupportedForm("finite-data classification needs >= 5 entries")
    mus = [schedule.mu_at(i) for i in range(len(schedule.entries))]
    nus = [schedule.nu_at(i) for i in range(len(schedule.entries))]
    mu_t, nu_t = trend_flag(mus), trend_flag(nus)
    if mu_t == "diverging":
        raise ViolatesCorollaryBound("(eps/r^2)log(1/r) trend diverges")
    nu = nus[-1]
    if nu_t == "diverging":
        regime = REGIME_INFINITE
    elif nu_t == "converging" and nu < 0.05:
        regime = REGIME_NO_NECK
    elif nu_t == "converging" and nu > 1.0:
        regime = REGIME_GEODESIC
    else:
        regime = REGIME_UNCLASSIFIED
    return MuNuResult(mus[-1], nu, regime, "finite", mu_t, nu_t)


# alpha-family schedules: alpha_k -> 1 with mu = lim r^(1-alpha)

@dataclass(frozen=True)
class AlphaEntry:
    k: int
    alpha: float
    r: float


@dataclass(frozen=True)
class AlphaForm:
    """alpha_k - 1 = coeff / log^power(1/r_k)."""

    coeff: float
    power: float

    def __post_init__(self):
        if self.coeff <= 0 or self.power < 1:
            raise UnsupportedForm("alpha family needs coeff > 0 and power >= 1")

    def alpha_of(self, r: float) -> float:
        return 1.0 + self.coeff / math.log(1.0 / r) ** self.power


@dataclass(frozen=True)
class AlphaSchedule:
    entries: tuple
    analytic: AlphaForm | None = None
    r_rule: tuple | None = None

    def __post_init__(self):
        if not all(e.alpha > 1 and 0 < e.r < 1 for e in self.entries):
            raise ValueError("alpha schedule needs alpha_k > 1 and 0 < r_k < 1")

    @classmethod
    def log_family(cls, coeff: float, power: float,
                   k_range=range(1, 6), r_rule=("dyadic", 3)) -> "AlphaSchedule":
        form = AlphaForm(coeff, power)
        entries = tuple(
            AlphaEntry(k, form.alpha_of(_r_of_k(r_rule, k)), _r_of_k(r_rule, k))
            for k in k_range
        )
        return cls(entries, analytic=form, r_rule=r_rule)

    def mu_at(self, idx: int) -> float:
        e = self.entries[idx]
        return e.r ** (1.0 - e.alpha)


def alpha_mu(schedule: AlphaSchedule) -> float:
    """mu = lim r_k^(1 - alpha_k) for the alpha family; always >= 1."""
    form = schedule.analytic
    if form is not None:
        mu = math.exp(form.coeff) if form.power == 1 else 1.0
    else:
        if len(schedule.entries) < 5:
            raise UnsupportedForm("finite-data mu needs >= 5 entries")
        vals = [schedule.mu_at(i) for i in range(len(schedule.entries))]
        if trend_flag(vals) == "diverging":
            raise InvalidMu("r^(1-alpha) diverges; mu must be finite")
        mu = vals[-1]
    if mu < 1.0:
        raise InvalidMu(f"mu = {mu} < 1")
    return mu


# ---------------------------------------------------------------------------
# intrinsic criterion

@dataclass(frozen=True)
class IntrinsicReport:
    values: tuple
    verdict: str          # "EnergyIdentityHolds" | "EnergyIdentityFails" | "Indeterminate"
    limit_estimate: float

    def to_dict(self) -> dict:
        return {"values": list(self.values), "verdict": self.verdict,
                "limit_estimate": self.limit_estimate}


def intrinsic_criterion(pairs) -> IntrinsicReport:
    """Trend of eps_k * B_k * log(B_k) for B_k the total squared-Laplacian
    mass; the full energy identity holds iff this tends to zero."""
    vals = [e * B * math.log(B) for e, B in pairs if B > 1.0]
    if len(vals) < 5:
        raise UnsupportedForm("need >= 5 entries with B_k > 1")
    v = np.asarray(vals)
    vmax = float(v.max())
    tail = v[-3:]
    decreasing = bool(np.all(np.diff(tail) < 1e-12 * max(vmax, 1e-300)))
    stabilized = float(tail.max() - tail.min()) <= 0.02 * max(float(tail.max()), 1e-300)
    if decreasing and v[-1] <= 0.15 * vmax:
        verdict, limit = "EnergyIdentityHolds", 0.0
    elif stabilized and v[-1] > 0.15 * vmax:
        verdict, limit = "EnergyIdentityFails", float(v[-1])
    else:
        verdict, limit = "Indeterminate", float(v[-1])
    return IntrinsicReport(tuple(float(x) for x in v), verdict, limit)


# ---------------------------------------------------------------------------
# detection and rescaling

@dataclass(frozen=True)
class Detection:
    x: tuple
    r: float
    index: tuple
    max_grad: float


def detect_concentration(u: MapField, check_multiple: bool = True) -> Detection:
    """Blow-up point and radius: the node of maximal |∇u| and 1/max|∇u|.

    Ties break toward the smallest radius, then the smallest angle index.
    A second, comparably strong and well-separated gradient peak raises
    MultipleConcentrations.
    """
    g = u.grid
    mag = np.sqrt(calc.gradient(g, u.values).sq)
    m = float(mag.max())
    if m < 1e-10:
        raise ConstantField("max |grad u| < 1e-10")
    flat_idx = int(np.argmax(mag))  # C-order scan: radius first, then angle
    i, j = np.unravel_index(flat_idx, mag.shape)
    x_grid, y_grid = g.nodes_xy
    x_k = (float(x_grid[i, j]), float(y_grid[i, j]))
    r_k = 1.0 / m

    if check_multiple:
        # a genuine second concentration is comparably strong AND sits many of
        # its own blow-up radii away (mutual scale separation); neck transit
        # has |grad| ~ c/|x| and never satisfies the distance test
        strong = mag >= 0.5 * m
        with np.errstate(divide="ignore"):
            own_scale = np.where(mag > 0, 1.0 / np.maximum(mag, 1e-300), np.inf)
        dist = np.hypot(x_grid - x_k[0], y_grid - x_k[1])
        separated = dist > 16.0 * (r_k + own_scale)
        if np.any(strong & separated):
            raise MultipleConcentrations(
                "a second, scale-separated gradient peak of comparable strength"
            )
    return Detection(x_k, r_k, (int(i), int(j)), m)


def _sample_field(u: MapField, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Evaluate u at arbitrary chart points, bilinear in (log r, theta).

    Points below the first positive ring blend linearly (in r) toward the
    center value on disk grids; points outside the grid raise WindowOutOfChart.
    """
    g = u.grid
    vals = u.values
    rr = np.hypot(X, Y)
    th = np.mod(np.arctan2(Y, X), 2.0 * np.pi)

    if np.any(rr > g.r_max * (1.0 + 1e-9)):
        raise WindowOutOfChart("sample point beyond the grid radius")
    first = 1 if g.includes_disk else 0
    rpos = g.r[first:]
    if not g.includes_disk and np.any(rr < g.r_min * (1.0 - 1e-9)):
        raise WindowOutOfChart("sample point inside the grid hole")

    jt = th / g.dtheta
    j0 = np.floor(jt).astype(int) % g.n_theta
    wj = jt - np.floor(jt)
    j1 = (j0 + 1) % g.n_theta

    rc = np.clip(rr, rpos[0], g.r_max)
    i1 = np.clip(np.searchsorted(rpos, rc), 1, len(rpos) - 1)
    i0 = i1 - 1
    wi = (np.log(rc) - np.log(rpos[i0])) / (np.log(rpos[i1]) - np.log(rpos[i0]))
    i0 += first
    i1 += first

    w00 = ((1 - wi) * (1 - wj))[..., None]
    w01 = ((1 - wi) * wj)[..., None]
    w10 = (wi * (1 - wj))[..., None]
    w11 = (wi * wj)[..., None]
    out = (w00 * vals[i0, j0] + w01 * vals[i0, j1]
           + w10 * vals[i1, j0] + w11 * vals[i1, j1])

    if g.includes_disk:
        below = rr < rpos[0]
        if np.any(below):
            # linear blend center <-> first ring
            w = (rr[below] / rpos[0])[..., None]
            ring = (
                (1 - wj[below])[..., None] * vals[1, j0[below]]
                + wj[below][..., None] * vals[1, j1[below]]
            )
            out[below] = (1 - w) * vals[0, 0] + w * ring
    return out


def _resample_radial(u: MapField, radii: np.ndarray) -> np.ndarray:
    """Values of u on the full angle set at new radii (4-point Lagrange in
    log r on the uniform positive rings; linear blend to the center below the
    first ring). Shape (len(radii), n_theta, l)."""
    g = u.grid
    first = 1 if g.includes_disk else 0
    rpos = g.r[first:]
    if np.any(radii > g.r_max * (1 + 1e-9)):
        raise WindowOutOfChart("resample radius beyond the grid")
    if not g.includes_disk and np.any(radii < g.r_min * (1 - 1e-9)):
        raise WindowOutOfChart("resample radius inside the grid hole")

    s_nodes = np.log(rpos)
    h = s_nodes[1] - s_nodes[0]
    n = len(rpos)
    out = np.empty((len(radii), g.n_theta, u.values.shape[-1]))

    inside = radii >= rpos[0]
    sc = np.log(np.clip(radii[inside], rpos[0], g.r_max))
    j0 = np.clip(np.floor((sc - s_nodes[0]) / h).astype(int) - 1, 0, n - 4)
    tau = (sc - s_nodes[j0]) / h
    t1, t2, t3 = tau - 1.0, tau - 2.0, tau - 3.0
    w0 = -t1 * t2 * t3 / 6.0
    w1 = tau * t2 * t3 / 2.0
    w2 = -tau * t1 * t3 / 2.0
    w3 = tau * t1 * t2 / 6.0
    vals = u.values[first:]
    out[inside] = (
        w0[:, None, None] * vals[j0]
        + w1[:, None, None] * vals[j0 + 1]
        + w2[:, None, None] * vals[j0 + 2]
        + w3[:, None, None] * vals[j0 + 3]
    )
    if np.any(~inside):
        if not g.includes_disk:
            raise WindowOutOfChart("resample radius inside the grid hole")
        w = (radii[~inside] / rpos[0])[:, None, None]
        out[~inside] = (1 - w) * u.values[0][None] + w * u.values[first][None]
    return out


def rescale_window(u: MapField, x_k, r_k: float, R: float,
                   n_r: int = 256, n_theta: int | None = None,
                   inner_fraction: float = 1e-3) -> MapField:
    """Resample u(x_k + r_k * y) onto a fresh flat disk grid of radius R,
    re-projected to the target.

    Windows centered at the chart origin reuse the chart's angle set and
    interpolate radially only (quartic accuracy, so window derivatives stay
    clean); off-center windows fall back to bilinear sampling.
    """
    n_theta = u.grid.n_theta if n_theta is None else n_theta
    wgrid = PolarGrid(0.0, R, n_r, n_theta, inner_fraction=inner_fraction)
    wchart = ConformalChart.flat(wgrid)
    aligned = (abs(x_k[0]) < 1e-14 and abs(x_k[1]) < 1e-14
               and n_theta == u.grid.n_theta)
    if aligned:
        vals = np.empty((wgrid.n_r, n_theta, u.values.shape[-1]))
        vals[1:] = _resample_radial(u, r_k * wgrid.r[1:])
        center = _resample_radial(u, np.array([max(r_k * 1e-12, 1e-300)]))[0]
        vals[0] = center.mean(axis=0)
    else:
        Xw, Yw = wgrid.nodes_xy
        vals = _sample_field(u, x_k[0] + r_k * Xw, x_k[1] + r_k * Yw)
    w = MapField(wchart, vals, u.target)
    return w.project()


@dataclass(frozen=True)
class BubbleRecord:
    """Rescaled bubble window and its energy estimates in blow-up coordinates.

    bubble_biharmonic estimates the full-plane squared-Laplacian mass of the
    bubble: the window integral over an interior ball (the outermost rings
    are excluded since the glue interface sits at the window edge) plus a
    decay-fit tail bound.
    """

    x_k: tuple
    r_k: float
    window: MapField
    bubble_dirichlet: float
    bubble_biharmonic: float
    dirichlet_tail: float
    biharmonic_tail: float


def bubble_record(u: MapField, x_k, r_k: float, R: float,
                  edge_margin: int = 4, **window_kw) -> BubbleRecord:
    w = rescale_window(u, x_k, r_k, R, **window_kw)
    r_cut = float(w.grid.r[-1 - edge_margin])
    d_tail = en.dirichlet_tail_estimate(w, r_cut)
    b_tail = en.biharmonic_tail_estimate(w, r_cut)
    d = en.dirichlet_energy(w, ("ball", r_cut)) + d_tail
    b = en.biharmonic_energy(w, ("ball", r_cut)) + b_tail
    return BubbleRecord(tuple(x_k), r_k, w, d, b, d_tail, b_tail)


def circle_average(u: MapField, r: float | None = None):
    """Angular mean of u per ring (an R^l average, not re-projected).

    With r given, returns the single averaged point at the nearest ring;
    otherwise the full curve, one row per radial node."""
    curve = u.values.mean(axis=1)
    if r is None:
        return curve
    g = u.grid
    lo = g.r[1] if g.includes_disk else g.r[0]
    if not (0.0 <= r <= g.r_max * (1 + 1e-12)):
        raise RegionOutOfRange(f"radius {r} outside grid")
    if r < 0.5 * lo and g.includes_disk:
        return curve[0]
    return curve[g.snap_index(r)]


# ---------------------------------------------------------------------------
# energy decomposition

@dataclass(frozen=True)
class EnergyBreakdown:
    """Three-region split of E_eps: bubble B_{R r_k}, neck A(R r_k, R0),
    body (chart minus B_{R0}); parts add to the total exactly."""

    body: float
    bubble: float
    neck: float
    R: float
    R0: float
    predicted_neck: float | None
    defect_gap: float | None
    eps: float
    r_k: float
    detail: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.body + self.bubble + self.neck

    def to_dict(self) -> dict:
        d = {
            "body": self.body, "bubble": self.bubble, "neck": self.neck,
            "R": self.R, "R0": self.R0, "eps": self.eps, "r_k": self.r_k,
            "predicted_neck": self.predicted_neck, "defect_gap": self.defect_gap,
        }
        d.update(self.detail)
        return d


def predicted_neck_energy(eps: float, r_k: float, R: float, R0: float,
                          bubble_biharmonic: float, rho0: float = 0.0) -> float:
    """Finite-window prediction of the neck defect.

    The limiting defect is 2 e^{-2 rho(0)} mu ∫|Δω|²; on the finite annulus
    A(R r_k, R0) the defect integral spans log(R0/(R r_k)) rather than
    log(1/r_k), so the truncation-corrected prediction is

        2 e^{-2 rho0} (eps/r_k^2) log^2(1/r_k) / log(R0/(R r_k)) * ∫|Δω|²,

    which recovers the limit as k -> ∞.
    """
    span = math.log(R0 / (R * r_k))
    if span <= 0:
        raise RegionOutOfRange("neck annulus is empty")
    mu_window = (eps / r_k**2) * math.log(1.0 / r_k) ** 2 / span
    return 2.0 * math.exp(-2.0 * rho0) * mu_window * bubble_biharmonic


def energy_decomposition(u: MapField, eps: float, x_k, r_k: float,
                         R: float, R0: float,
                         bubble_biharmonic: float | None = None) -> EnergyBreakdown:
    """Split E_eps into bubble/neck/body (regions centered at the chart
    origin, where the single concentration point is assumed to sit)."""
    g = u.grid
    p = R * r_k
    if not (p < R0 <= g.r_max * (1 + 1e-12)):
        raise RegionOutOfRange(f"need R*r_k < R0 <= chart radius, got {p} vs {R0}")
    rep_bubble = en.epsilon_energy(u, eps, ("ball", p))
    rep_neck = en.epsilon_energy(u, eps, ("annulus", p, R0))
    rep_body = en.epsilon_energy(u, eps, ("annulus", R0, g.r_max)) if R0 < g.r_max \
        else en.EnergyReport(0.0, 0.0, eps, 0.0, "empty")

    predicted = None
    gap = None
    if bubble_biharmonic is not None:
        predicted = predicted_neck_energy(eps, r_k, R, R0, bubble_biharmonic,
                                          u.chart.rho_at_origin)
        gap = rep_neck.epsilon_total - predicted
    detail = {
        "bubble_dirichlet": rep_bubble.dirichlet,
        "bubble_biharmonic_chart": rep_bubble.biharmonic,
        "neck_dirichlet": rep_neck.dirichlet,
        "neck_biharmonic_chart": rep_neck.biharmonic,
        "body_dirichlet": rep_body.dirichlet,
    }
    return EnergyBreakdown(
        body=rep_body.epsilon_total, bubble=rep_bubble.epsilon_total,
        neck=rep_neck.epsilon_total, R=R, R0=R0,
        predicted_neck=predicted, defect_gap=gap, eps=eps, r_k=r_k, detail=detail,
    )


# ---------------------------------------------------------------------------
# neck geometry

def oscillation(u: MapField, p: float, q: float) -> float:
    """Oscillation (image diameter in R^l) over the annulus, estimated from
    per-ring per-coordinate extremal nodes to avoid the quadratic pair scan."""
    g = u.grid
    lo, hi, _ = g.resolve_region(("annulus", p, q))
    rows = np.where((g.r >= lo - 1e-15) & (g.r <= hi + 1e-15))[0]
    vals = u.values[rows]  # (m, n_theta, l)
    cand_j = np.concatenate([np.argmin(vals, axis=1), np.argmax(vals, axis=1)], axis=1)
    pts = vals[np.arange(len(rows))[:, None], cand_j].reshape(-1, vals.shape[-1])
    pts = np.unique(pts, axis=0)
    best = 0.0
    step = 512
    for s in range(0, len(pts), step):
        blk = pts[s:s + step]
        d2 = np.sum((blk[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
        best = max(best, float(d2.max()))
    return math.sqrt(best)


def _log_map(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Tangent vector at p pointing to q along the great circle (any ambient dim)."""
    c = float(np.clip(np.dot(p, q), -1.0, 1.0))
    v = q - c * p
    nv = float(np.linalg.norm(v))
    if nv < 1e-14:
        return np.zeros_like(p)
    return (math.atan2(nv, c) / nv) * v


def intrinsic_curve_stats(points: np.ndarray):
    """(length, max turning angle) of a polyline of unit vectors, with
    great-circle segment lengths and parallel-transport comparison of
    consecutive directions."""
    pts = [p for p in points if np.linalg.norm(p) > 1e-6]
    pts = [p / np.linalg.norm(p) for p in pts]
    length = 0.0
    segs = []
    for a, b in zip(pts, pts[1:]):
        chord = float(np.linalg.norm(b - a))
        ang = 2.0 * math.asin(min(1.0, 0.5 * chord))
        if ang > 1e-12:
            segs.append((a, b, ang))
            length += ang
    deviation = 0.0
    for (a1, b1, _), (a2, b2, _) in zip(segs, segs[1:]):
        v_in = -_log_map(b1, a1)   # incoming direction transported to the corner
        v_out = _log_map(a2, b2)   # b1 == a2 up to dropped degenerate nodes
        ni, no = np.linalg.norm(v_in), np.linalg.norm(v_out)
        if ni < 1e-14 or no < 1e-14:
            continue
        cosang = float(np.clip(np.dot(v_in, v_out) / (ni * no), -1.0, 1.0))
        deviation = max(deviation, math.acos(cosang))
    return length, deviation


@dataclass(frozen=True)
class NeckAnalysis:
    mu: float
    nu: float
    osc: float
    curve: np.ndarray            # raw circle averages, one row per ring
    measured_length: float       # intrinsic length of the projected curve
    chord_length: float          # ambient polyline length (diagnostic)
    predicted_length: float
    geodesic_deviation: float
    regime: str

    def __post_init__(self):
        assert self.mu >= 0 and self.nu >= 0

    def to_dict(self) -> dict:
        return {
            "mu": self.mu, "nu": self.nu, "osc": self.osc,
            "measured_length": self.measured_length,
            "chord_length": self.chord_length,
            "predicted_length": self.predicted_length,
            "geodesic_deviation": self.geodesic_deviation,
            "regime": self.regime,
        }


def neck_analysis(u: MapField, p: float, q: float, eps: float, r_k: float,
                  bubble: BubbleRecord, schedule: Schedule | None = None) -> NeckAnalysis:
    """Neck geometry over the annulus [p, q]: oscillation, the circle-average
    curve with intrinsic length and geodesic deviation, and the length
    predicted by the trichotomy formula nu * sqrt(e^{-2rho0} ∫|Δω|² / π)."""
    if bubble.bubble_biharmonic <= 0:
        raise DegenerateBubble("bubble biharmonic energy must be positive")
    g = u.grid
    lo, hi, _ = g.resolve_region(("annulus", p, q))
    rows = np.where((g.r >= lo - 1e-15) & (g.r <= hi + 1e-15))[0]

    curve = u.values[rows].mean(axis=1)
    length, deviation = intrinsic_curve_stats(curve)
    chord = float(np.sum(np.linalg.norm(np.diff(curve, axis=0), axis=-1)))
    osc = oscillation(u, p, q)

    mu_k = (eps / r_k**2) * math.log(1.0 / r_k)
    nu_k = math.sqrt(eps) / r_k * math.log(1.0 / r_k)
    nu_pred = nu_k
    # a single finite-k value cannot identify the limit; classification needs
    # the schedule (analytic form or trend)
    regime = REGIME_UNCLASSIFIED
    if schedule is not None:
        res = mu_nu(schedule)
        regime = res.regime
        if res.source == "analytic" and math.isfinite(res.nu) and res.nu > 0:
            nu_pred = res.nu

    rho0 = u.chart.rho_at_origin
    predicted = nu_pred * math.sqrt(
        math.exp(-2.0 * rho0) * bubble.bubble_biharmonic / math.pi
    )
    return NeckAnalysis(
        mu=mu_k, nu=nu_k, osc=osc, curve=curve,
        measured_length=length, chord_length=chord,
        predicted_length=predicted, geodesic_deviation=deviation, regime=regime,
    )


# ---------------------------------------------------------------------------
# identity verification

@dataclass(frozen=True)
class IdentityReport:
    identity: str
    verdict: str
    mu: float
    defect_limit: float
    predicted_limit: float
    rows: tuple            # per-k dicts
    gap_trend: str

    def to_dict(self) -> dict:
        return {
            "identity": self.identity, "verdict": self.verdict, "mu": self.mu,
            "defect_limit": self.defect_limit, "predicted_limit": self.predicted_limit,
            "rows": list(self.rows), "gap_trend": self.gap_trend,
        }


def verify_energy_identity(breakdowns, schedule: Schedule,
                           limit_energy: float, bubble_dirichlet: float,
                           bubble_biharmonic: float, rho0: float = 0.0) -> IdentityReport:
    """Tabulate measured total perturbed energy against
    body-limit + bubble energy + 2 e^{-2rho0} mu ∫|Δω|².

    The per-k rows compare the measured neck energy with its finite-window
    prediction; the verdict says whether the full identity (mu = 0) or the
    defect identity (mu > 0) is supported by the trend.
    """
    res = mu_nu(schedule)
    mu = res.mu if math.isfinite(res.mu) else float("nan")
    defect_limit = 2.0 * math.exp(-2.0 * rho0) * mu * bubble_biharmonic
    predicted_limit = limit_energy + bubble_dirichlet + defect_limit

    rows = []
    for bd, entry in zip(breakdowns, schedule.entries):
        lhs = bd.total
        row = {
            "k": entry.k, "eps": entry.eps, "r_k": entry.r,
            "lhs": lhs, "neck": bd.neck,
            "predicted_neck": bd.predicted_neck,
            "neck_ratio": (bd.neck / bd.predicted_neck) if bd.predicted_neck else None,
            "gap_to_limit": lhs - predicted_limit,
        }
        rows.append(row)

    if mu == 0.0:
        gaps = [abs(r["gap_to_limit"]) for r in rows]
        trend = trend_flag(gaps)
        ok = gaps[-1] <= gaps[0] or trend == "converging"
        verdict = "full_identity_supported" if ok else "indeterminate"
    else:
        ratios = [abs(r["neck_ratio"] - 1.0) for r in rows if r["neck_ratio"]]
        trend = trend_flag(ratios) if ratios else "indeterminate"
        ok = bool(ratios) and ratios[-1] < 0.25
        verdict = "defect_identity_supported" if ok else "indeterminate"

    return IdentityReport(
        identity="epsilon_energy_identity", verdict=verdict, mu=mu,
        defect_limit=defect_limit, predicted_limit=predicted_limit,
        rows=tuple(rows), gap_trend=trend,
    )


def verify_dirichlet_identity_alpha(dirichlet_totals, schedule: AlphaSchedule,
                                    bubble_dirichlet: float,
                                    limit_energy: float) -> IdentityReport:
    """Dirichlet-energy identity for the alpha family:
    lim E[u_k] = E[u_inf] + (1 + 2 log mu) E[ω], mu = lim r^(1-alpha) >= 1."""
    mu = alpha_mu(schedule)
    factor = 1.0 + 2.0 * math.log(mu)
    predicted = limit_energy + factor * bubble_dirichlet
    rows = []
    for val, entry in zip(dirichlet_totals, schedule.entries):
        rows.append({
            "k": entry.k, "alpha": entry.alpha, "r_k": entry.r,
            "dirichlet": val, "gap_to_limit": val - predicted,
            "rel_gap": abs(val - predicted) / max(abs(predicted), 1e-300),
        })
    gaps = [r["rel_gap"] for r in rows]
    trend = trend_flag(gaps)
    verdict = "defect_identity_supported" if gaps[-1] < 0.25 else "indeterminate"
    return IdentityReport(
        identity="alpha_dirichlet_identity", verdict=verdict, mu=mu,
        defect_limit=2.0 * math.log(mu) * bubble_dirichlet,
        predicted_limit=predicted, rows=tuple(rows), gap_trend=trend,
    )
