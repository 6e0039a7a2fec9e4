"""Constrained minimization of the perturbed energy by projected gradient
descent with nodewise retraction to the sphere.

Steps follow the negative discrete energy gradient (the exact adjoint-built
one from :mod:`epsharm.energy`), are capped by the explicit stability bound
``step <= c * h^4 / eps`` (h = smallest radial spacing, c = 0.2), falling back
to the ``c * h^2`` cap when ``eps < h^2``, and are accepted under an Armijo
backtracking rule. Boundary rings are pinned (Dirichlet data taken from the
initial field). Energies never increase under the backtracking rule.

Convergence is measured by the interior Euler-Lagrange residual norm
(:func:`epsharm.energy.el_residual`), whose floor on a given grid is its
discretization error; `residual_tol` should be chosen at that floor rather
than at the 1e-7 default on coarse grids. The exact discrete gradient carries
additional boundary-closure mass that the interior residual does not see; set
`gradient_tol` to also require discrete stationarity (needed when the result
must be a critical point of the discrete energy to high accuracy).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import energy as en
from .errors import Diverged, NonFiniteEnergy
from .geometry import MapField

STEP_CAP_FACTOR = 0.2
ARMIJO_C = 1e-4
SHRINK = 0.5


@dataclass
class SolveOptions:
    max_iters: int = 500
    residual_tol: float = 1e-7
    gradient_tol: float | None = None
    step_rule: str = "backtracking"  # or "fixed"
    max_backtracks: int = 40
    step_cap_factor: float = STEP_CAP_FACTOR

    def __post_init__(self):
        if self.residual_tol <= 0:
            raise ValueError("residual_tol must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.step_rule not in ("backtracking", "fixed"):
            raise ValueError("step_rule must be 'backtracking' or 'fixed'")


@dataclass(frozen=True)
class SolveResult:
    field: MapField
    iterations: int
    residual_history: tuple    # interior EL-residual norm per iterate
    gradient_history: tuple    # discrete stationarity norm per iterate
    energy_history: tuple
    converged: bool
    energy_report: en.EnergyReport | None = None


def stability_step_cap(u: MapField, eps: float, factor: float = STEP_CAP_FACTOR) -> float:
    """Explicit stability bound: c*h^4/eps for the fourth-order term, c*h^2
    when eps < h^2 (second-order term dominates)."""
    h = float(np.min(np.diff(u.grid.r)))
    if eps < h * h:
        return factor * h * h
    return factor * h**4 / eps


def minimize(u0: MapField, eps: float, opts: SolveOptions | None = None) -> SolveResult:
    """Projected gradient descent from u0 with pinned boundary rings."""
    opts = opts if opts is not None else SolveOptions()
    u = u0.copy().project()
    pinned = en.pinned_mask(u)

    cap = stability_step_cap(u, eps, opts.step_cap_factor)
    step = cap

    energy = en.epsilon_energy(u, eps).epsilon_total
    if not np.isfinite(energy):
        raise NonFiniteEnergy("initial energy is not finite")

    energies = [energy]
    residuals: list[float] = []
    grad_norms: list[float] = []
    converged = False
    increases = 0
    iterations = 0

    def is_converged(res, gnorm):
        ok = res <= opts.residual_tol
        if opts.gradient_tol is not None:
            ok = ok and 0.5 * gnorm <= opts.gradient_tol
        return ok

    for it in range(opts.max_iters + 1):
        G = en.energy_gradient(u, eps, pinned)
        gnorm2 = en.field_inner(u, G, G)
        gnorm = np.sqrt(max(gnorm2, 0.0))
        _, residual = en.el_residual(u, eps)
        residuals.append(residual)
        grad_norms.append(0.5 * gnorm)
        if is_converged(residual, gnorm):
            converged = True
            iterations = it
            break
        if it == opts.max_iters:
            iterations = it
            break

        if opts.step_rule == "fixed":
            u = en.retract(u, G, -cap)
            new_energy = en.epsilon_energy(u, eps).epsilon_total
        else:
            trial = min(cap, 2.0 * step)
            new_energy = None
            for _ in range(opts.max_backtracks):
                cand = en.retract(u, G, -trial)
                cand_energy = en.epsilon_energy(cand, eps).epsilon_total
                if np.isfinite(cand_energy) and (
                    cand_energy <= energy - ARMIJO_C * trial * gnorm2
                ):
                    u, new_energy, step = cand, cand_energy, trial
                    break
                trial *= SHRINK
            if new_energy is None:
                # no admissible step: the gradient is at the numerical floor
                iterations = it
                converged = is_converged(residual, gnorm)
                break

        if not np.isfinite(new_energy):
            raise NonFiniteEnergy(f"energy became non-finite at iteration {it}")
        if new_energy > energy:
            increases += 1
            if increases >= 10:
                raise Diverged("energy increased across 10 consecutive accepted steps")
        else:
            increases = 0
        energy = new_energy
        energies.append(energy)
        iterations = it + 1

    report = en.epsilon_energy(u, eps)
    return SolveResult(
        field=u,
        iterations=iterations,
        residual_history=tuple(residuals),
        gradient_history=tuple(grad_norms),
        energy_history=tuple(energies),
        converged=converged,
        energy_report=report,
    )


def continuation_solve(u0: MapField, schedule, opts: SolveOptions | None = None) -> list[SolveResult]:
    """Solve along a strictly decreasing positive eps schedule, warm-starting
    each solve from the previous result."""
    eps_list = list(schedule)
    if any(e <= 0 for e in eps_list):
        raise ValueError("continuation schedule must be positive")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("continuation schedule must be strictly decreasing")
    results: list[SolveResult] = []
    u = u0
    for k, eps in enumerate(eps_list):
        try:
            res = minimize(u, eps, opts)
        except Exception as exc:
            raise type(exc)(f"continuation step k={k} (eps={eps}): {exc}") from exc
        results.append(res)
        u = res.field
    return results
