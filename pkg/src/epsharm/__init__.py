"""Sphere-valued maps on conformal charts: discretization, fourth-order
perturbed energy minimization, and concentration/neck analysis."""

from .geometry import (
    ConformalChart,
    MapField,
    PolarGrid,
    SphereTarget,
    project_to_target,
    second_fundamental_form,
    tangent_project,
)

__all__ = [
    "ConformalChart",
    "MapField",
    "PolarGrid",
    "SphereTarget",
    "project_to_target",
    "second_fundamental_form",
    "tangent_project",
]

__version__ = "0.1.0"
