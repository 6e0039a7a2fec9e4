"""Stress-energy tensors, their conservation-law defect, and the radial
(Pohozaev-type) balance used as numerical consistency checks.

With v := Δ_g u = e^{-2rho} Δu and flat chart derivatives, the two tensors in
the orthonormal frame of the conformal metric are

    S1 = e^{-2rho} [ 1/2 |∇u|^2 δ - ∂u ⊗ ∂u ]
    S2 = e^{-2rho} [ 1/2 e^{2rho}|v|^2 δ + <∂_γ u, ∂_γ v> δ
                     - <∂_α u, ∂_β v> - <∂_β u, ∂_α v> ]

and the exact chart-coordinate conservation law, valid for ANY smooth u
(not only critical points), reads

    ∂_α [e^{2rho}(S1 - eps S2)]_{αβ}
        + e^{2rho} <∂_β u, Δ_g u - eps Δ_g^2 u>
        + eps e^{2rho} |Δ_g u|^2 ∂_β rho  =  0 .

At rho = 0 this is the familiar div(S1 - eps S2) = -<∇u, Δu - eps Δ²u>.
`divergence_defect` measures the discrete residual of this identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import calculus as calc
from .errors import GridTooCoarse, RegionOutOfRange
from .geometry import MapField

DEFECT_MARGIN = 3


@dataclass(frozen=True)
class StressEnergy:
    """Nodewise symmetric 2x2 tensors (Cartesian chart components)."""

    S1: np.ndarray  # (n_r, n_theta, 2, 2)
    S2: np.ndarray
    epsilon: float


def _flat_tensors(u: MapField):
    """Flat-form tensors s1 and S2conf (the e^{2rho}-weighted frame tensors),
    plus intermediate fields used by the divergence defect."""
    g, chart = u.grid, u.chart
    ux, uy = calc.cartesian_gradient(g, u.values)
    grad_sq = np.sum(ux * ux + uy * uy, axis=-1)

    v = chart.em2rho[:, :, None] * calc.laplacian_flat(g, u.values)  # Δ_g u
    vx, vy = calc.cartesian_gradient(g, v)
    v_sq = np.sum(v * v, axis=-1)

    s1 = np.empty(grad_sq.shape + (2, 2))
    s1[..., 0, 0] = 0.5 * grad_sq - np.sum(ux * ux, axis=-1)
    s1[..., 1, 1] = 0.5 * grad_sq - np.sum(uy * uy, axis=-1)
    s1[..., 0, 1] = s1[..., 1, 0] = -np.sum(ux * uy, axis=-1)

    cross = np.sum(ux * vx + uy * vy, axis=-1)
    s2 = np.empty_like(s1)
    diag = 0.5 * chart.e2rho * v_sq + cross
    s2[..., 0, 0] = diag - 2.0 * np.sum(ux * vx, axis=-1)
    s2[..., 1, 1] = diag - 2.0 * np.sum(uy * vy, axis=-1)
    s2[..., 0, 1] = s2[..., 1, 0] = -np.sum(ux * vy, axis=-1) - np.sum(uy * vx, axis=-1)
    return s1, s2, v, v_sq, ux, uy


def stress_energy(u: MapField, eps: float) -> StressEnergy:
    """Evaluate both tensors nodewise (orthonormal-frame components)."""
    if u.grid.n_r < 8:
        raise GridTooCoarse("stress tensors need n_r >= 8")
    s1, s2conf, *_ = _flat_tensors(u)
    em = u.chart.em2rho[:, :, None, None]
    return StressEnergy(S1=em * s1, S2=em * s2conf, epsilon=eps)


def _interior_mask(u: MapField, margin: int) -> np.ndarray:
    g = u.grid
    mask = np.ones((g.n_r, g.n_theta), dtype=bool)
    mask[g.n_r - margin:, :] = False
    if g.includes_disk:
        mask[0, :] = False  # tensor divergence is not defined at the center node
    else:
        mask[:margin, :] = False
    return mask


def divergence_defect(u: MapField, eps: float, margin: int = DEFECT_MARGIN,
                      include_pairing: bool = True) -> float:
    """L^2 norm over the interior of the conservation-law residual.

    With include_pairing=False only |div T|_beta is measured, which vanishes
    in the continuum along critical points.
    """
    if u.grid.n_r < 8:
        raise GridTooCoarse("divergence defect needs n_r >= 8")
    g, chart = u.grid, u.chart
    s1, s2conf, v, v_sq, ux, uy = _flat_tensors(u)
    T = s1 - eps * s2conf  # flat form: equals e^{2rho} (S1 - eps S2)

    Tx_x, Tx_y = calc.cartesian_gradient(g, T[..., 0, 0]), calc.cartesian_gradient(g, T[..., 0, 1])
    Ty_y = calc.cartesian_gradient(g, T[..., 1, 1])
    div_x = Tx_x[0] + Tx_y[1]
    div_y = Tx_y[0] + Ty_y[1]

    defect_x, defect_y = div_x, div_y
    if include_pairing:
        lap_g2 = chart.em2rho[:, :, None] * calc.laplacian_flat(g, v)  # Δ_g^2 u
        el = v - eps * lap_g2
        pair_x = chart.e2rho * np.sum(ux * el, axis=-1)
        pair_y = chart.e2rho * np.sum(uy * el, axis=-1)
        defect_x = defect_x + pair_x
        defect_y = defect_y + pair_y
        if eps != 0.0:
            rx, ry = calc.cartesian_gradient(g, chart.rho)
            defect_x = defect_x + eps * chart.e2rho * v_sq * rx
            defect_y = defect_y + eps * chart.e2rho * v_sq * ry

    mask = _interior_mask(u, margin)
    w = calc.quadrature_weights(g)
    dens = (defect_x**2 + defect_y**2) * mask
    return float(np.sqrt(np.sum(w * dens)))


def pohozaev_balance(u: MapField, eps: float, t: float):
    """Radial balance at the circle of radius t (snapped to a node).

    lhs = ∮_{∂B_t} |∂_r u|^2 - (1/t^2)|∂_θ u|^2 dS
    rhs = (2 eps/t) ∫_{B_t} e^{-2rho}|Δu|^2 dx
          - 2 eps ∮_{∂B_t} [ (e^{-2rho}/2)|Δu|^2 + <∇u, ∇v> - 2 <∂_r u, ∂_r v> ] dS

    with v = e^{-2rho} Δu. Returns (lhs, rhs, gap, t_snapped).
    """
    g, chart = u.grid, u.chart
    if not g.includes_disk:
        raise RegionOutOfRange("pohozaev balance integrates over a ball; needs a disk grid")
    ts = g.snap_radius(t)
    if ts >= g.r[-DEFECT_MARGIN]:
        raise RegionOutOfRange("t too close to the outer boundary for the stencils")

    gr = calc.gradient(g, u.values)
    lhs_dens = np.sum(gr.radial**2 - gr.tangential**2, axis=-1)
    lhs = calc.boundary_integral(g, lhs_dens, ts)

    if eps == 0.0:
        return lhs, 0.0, lhs, ts

    lap = calc.laplacian_flat(g, u.values)
    bih_dens = chart.em2rho * np.sum(lap * lap, axis=-1)
    ball = calc.integrate(g, bih_dens, ("ball", ts))

    v = chart.em2rho[:, :, None] * lap
    gv = calc.gradient(g, v)
    b1 = 0.5 * bih_dens
    b2 = np.sum(gr.radial * gv.radial + gr.tangential * gv.tangential, axis=-1)
    b3 = -2.0 * np.sum(gr.radial * gv.radial, axis=-1)
    boundary = calc.boundary_integral(g, b1 + b2 + b3, ts)

    rhs = (2.0 * eps / ts) * ball - 2.0 * eps * boundary
    return lhs, rhs, lhs - rhs, ts


def tangential_energy(u: MapField, p: float, q: float) -> float:
    """∫_{A(p,q)} (1/r^2) |∂_θ u|^2 dx (flat chart measure)."""
    gr = calc.gradient(u.grid, u.values)
    dens = np.sum(gr.tangential**2, axis=-1)
    return calc.integrate(u.grid, dens, ("annulus", p, q))
