"""Run configuration: JSON files validated against a published schema.

Unknown keys are rejected everywhere (additionalProperties: false), and
validation happens before any computation. Builders turn validated config
blocks into library objects.
"""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import numpy as np

from .bubbling import AlphaSchedule, Schedule
from .errors import ConfigError
from .geometry import ConformalChart, PolarGrid
from .synth import GlueSpec, RationalBubble

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT = {"type": "integer", "minimum": 1}

_GRID = {
    "type": "object",
    "properties": {
        "r_min": {"type": "number", "minimum": 0},
        "r_max": _POS,
        "n_r": {"type": "integer", "minimum": 4},
        "n_theta": {"type": "integer", "minimum": 8, "multipleOf": 2},
        "inner_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    },
    "required": ["r_min", "r_max", "n_r", "n_theta"],
    "additionalProperties": False,
}

_RHO = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"type": {"const": "constant"}, "value": _NUM},
            "required": ["type", "value"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "radial_poly"},
                "coeffs": {"type": "array", "items": _NUM, "minItems": 1},
            },
            "required": ["type", "coeffs"],
            "additionalProperties": False,
        },
    ]
}

_CHART = {
    "type": "object",
    "properties": {"gamma": _POS, "rho": _RHO},
    "required": ["rho"],
    "additionalProperties": False,
}

_R_RULE = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"type": {"const": "dyadic"}, "offset": {"type": "integer", "minimum": 0}},
            "required": ["type", "offset"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"type": {"const": "exp"}},
            "required": ["type"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"type": {"const": "power"}, "c": _POS},
            "required": ["type", "c"],
            "additionalProperties": False,
        },
    ]
}

_SCHEDULE = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "a": {"type": "number", "minimum": 2},
                "b": {"type": "integer"},
                "coeff": _POS,
                "r_rule": _R_RULE,
                "k_start": _INT,
                "k_end": _INT,
            },
            "required": ["a", "b", "k_start", "k_end"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "entries": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "items": _NUM,
                        "minItems": 3,
                        "maxItems": 3,
                    },
                    "minItems": 1,
                }
            },
            "required": ["entries"],
            "additionalProperties": False,
        },
    ]
}

_ALPHA_SCHEDULE = {
    "type": "object",
    "properties": {
        "coeff": _POS,
        "power": {"type": "number", "minimum": 1},
        "r_rule": _R_RULE,
        "k_start": _INT,
        "k_end": _INT,
    },
    "required": ["coeff", "power", "k_start", "k_end"],
    "additionalProperties": False,
}

_COMPLEX_POLY = {
    "type": "array",
    "items": {
        "oneOf": [
            _NUM,
            {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        ]
    },
    "minItems": 1,
}

_GLUE = {
    "type": "object",
    "properties": {
        "bubble": {
            "oneOf": [
                {
                    "type": "object",
                    "properties": {"degree": {"type": "integer", "minimum": 1}},
                    "required": ["degree"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {"p": _COMPLEX_POLY, "q": _COMPLEX_POLY},
                    "required": ["p"],
                    "additionalProperties": False,
                },
            ]
        },
        "neck_mode": {"enum": ["none", "geodesic"]},
        "nu": _POS,
        "R": {"type": "number", "exclusiveMinimum": 1},
        "R0": _POS,
        "tangent": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
    },
    "required": ["bubble", "R", "R0"],
    "additionalProperties": False,
}

_SOLVER = {
    "type": "object",
    "properties": {
        "epsilon": {"type": "number", "minimum": 0},
        "max_iters": _INT,
        "residual_tol": _POS,
        "gradient_tol": _POS,
        "step_rule": {"enum": ["backtracking", "fixed"]},
        "initial": {
            "oneOf": [
                {
                    "type": "object",
                    "properties": {
                        "type": {"const": "bubble_window"},
                        "scale": _POS,
                        "degree": {"type": "integer", "minimum": 1},
                    },
                    "required": ["type", "scale"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {
                        "type": {"const": "noisy_constant"},
                        "point": {"type": "array", "items": _NUM, "minItems": 2},
                        "amplitude": {"type": "number", "minimum": 0},
                    },
                    "required": ["type", "point", "amplitude"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {"type": {"const": "field_file"}, "path": {"type": "string"}},
                    "required": ["type", "path"],
                    "additionalProperties": False,
                },
            ]
        },
    },
    "required": ["epsilon", "initial"],
    "additionalProperties": False,
}

_ANALYZE = {
    "type": "object",
    "properties": {
        "inputs": {
            "oneOf": [
                {"const": "from_synth"},
                {"type": "array", "items": {"type": "string"}, "minItems": 1},
            ]
        },
        "R": {"type": "number", "exclusiveMinimum": 1},
        "R0": _POS,
        "window_n_r": {"type": "integer", "minimum": 16},
        "osc_inner_factor": {"type": "number", "minimum": 1},
        "diagnostics": {"type": "boolean"},
    },
    "required": ["inputs", "R", "R0"],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "command": {"enum": ["solve", "sequence", "synth", "analyze", "verify", "report"]},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "parallel_k": {"type": "boolean"},
        "grid": _GRID,
        "chart": _CHART,
        "target": {
            "type": "object",
            "properties": {"ambient_dim": {"type": "integer", "minimum": 2}},
            "required": ["ambient_dim"],
            "additionalProperties": False,
        },
        "solver": _SOLVER,
        "continuation": {
            "type": "object",
            "properties": {"eps_list": {"type": "array", "items": _POS}},
            "required": ["eps_list"],
            "additionalProperties": False,
        },
        "schedule": _SCHEDULE,
        "alpha_schedule": _ALPHA_SCHEDULE,
        "glue": _GLUE,
        "analyze": _ANALYZE,
        "verify": {
            "type": "object",
            "properties": {"family": {"enum": ["epsilon", "alpha"]}},
            "required": ["family"],
            "additionalProperties": False,
        },
        "report": {
            "type": "object",
            "properties": {
                "csv": {"type": "string"},
                "verdict": {"type": "string"},
                "dpi": {"type": "integer", "minimum": 40},
            },
            "required": ["csv"],
            "additionalProperties": False,
        },
    },
    "required": ["output_dir"],
    "additionalProperties": False,
}

_REQUIRED_BLOCKS = {
    "solve": ("grid", "chart", "solver"),
    "sequence": ("grid", "chart", "solver", "continuation"),
    "synth": ("grid", "chart", "schedule", "glue"),
    "analyze": ("analyze",),
    "verify": ("grid", "chart", "schedule", "glue", "verify"),
    "report": ("report",),
}


def load_config(path) -> dict:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}")
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"at '{where}': {e.message}")


def require_blocks(cfg: dict, command: str) -> None:
    for block in _REQUIRED_BLOCKS.get(command, ()):
        if block not in cfg:
            raise ConfigError(f"command '{command}' requires a '{block}' section")


def build_grid(cfg: dict) -> PolarGrid:
    g = cfg["grid"]
    kwargs = {}
    if "inner_fraction" in g:
        kwargs["inner_fraction"] = g["inner_fraction"]
    try:
        return PolarGrid(g["r_min"], g["r_max"], g["n_r"], g["n_theta"], **kwargs)
    except ValueError as exc:
        raise ConfigError(f"at 'grid': {exc}")


def build_chart(cfg: dict, grid: PolarGrid) -> ConformalChart:
    c = cfg["chart"]
    gamma = c.get("gamma")
    rho = c["rho"]
    if rho["type"] == "constant":
        return ConformalChart.constant(grid, rho["value"], gamma)
    return ConformalChart.radial_polynomial(grid, rho["coeffs"], gamma)


def _parse_r_rule(spec: dict | None):
    if spec is None:
        return ("dyadic", 3)
    if spec["type"] == "dyadic":
        return ("dyadic", spec["offset"])
    if spec["type"] == "exp":
        return ("exp",)
    return ("power", spec["c"])


def build_schedule(cfg: dict) -> Schedule:
    s = cfg["schedule"]
    try:
        if "entries" in s:
            from .bubbling import ScheduleEntry
            entries = tuple(
                ScheduleEntry(int(k), float(eps), float(r)) for k, eps, r in s["entries"]
            )
            return Schedule(entries)
        return Schedule.power_log(
            s["a"], s["b"], coeff=s.get("coeff", 1.0),
            k_range=range(s["k_start"], s["k_end"] + 1),
            r_rule=_parse_r_rule(s.get("r_rule")),
        )
    except ValueError as exc:
        raise ConfigError(f"at 'schedule': {exc}")


def build_alpha_schedule(cfg: dict) -> AlphaSchedule:
    s = cfg["alpha_schedule"]
    return AlphaSchedule.log_family(
        s["coeff"], s["power"],
        k_range=range(s["k_start"], s["k_end"] + 1),
        r_rule=_parse_r_rule(s.get("r_rule")),
    )


def _poly_coeffs(raw) -> tuple:
    out = []
    for c in raw:
        if isinstance(c, (int, float)):
            out.append(complex(c))
        else:
            out.append(complex(c[0], c[1]))
    return tuple(out)


def build_glue_spec(cfg: dict, schedule: Schedule,
                    alpha_schedule: AlphaSchedule | None = None) -> GlueSpec:
    gcfg = cfg["glue"]
    bcfg = gcfg["bubble"]
    if "degree" in bcfg:
        bubble = RationalBubble.power(bcfg["degree"])
    else:
        bubble = RationalBubble(_poly_coeffs(bcfg["p"]), _poly_coeffs(bcfg.get("q", [1.0])))
    return GlueSpec(
        bubble=bubble,
        schedule=schedule,
        R=gcfg["R"],
        R0=gcfg["R0"],
        neck_mode=gcfg.get("neck_mode", "geodesic"),
        nu=gcfg.get("nu"),
        neck_tangent=tuple(gcfg.get("tangent", (1.0, 0.0, 0.0))),
        alpha_schedule=alpha_schedule,
    )


def rng_from(cfg: dict) -> np.random.Generator:
    return np.random.default_rng(cfg.get("seed", 0))
