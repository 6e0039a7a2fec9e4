"""Binary field container and JSON annotation sidecars.

Layout (all little-endian):

    magic   4s     "EHMF"
    version u32    1
    n_r     u32
    n_theta u32
    ambient u32
    flags   u8     bit 0: grid includes the disk center
    r_min, r_max, inner_fraction, gamma   4 x f64
    rho_kind u8    0 constant / 1 radial polynomial / 2 sampled
    n_rho   u32    number of rho payload doubles
    rho     f64 x n_rho
    values  f64 x (n_r * n_theta * ambient), node-major
            (radial index outer, angular index inner, components last)

Annotations ride in a sidecar "<path>.json". Writing is deterministic, so
write -> read -> write round-trips byte-identically.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry import ConformalChart, MapField, PolarGrid, SphereTarget

MAGIC = b"EHMF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIBddddBI")


def write_field(path, field: MapField, annotations: dict | None = None) -> None:
    g = field.grid
    chart = field.chart
    if chart.rho_spec is not None and chart.rho_spec[0] == "constant":
        rho_kind, rho_payload = 0, np.array([chart.rho_spec[1]])
    elif chart.rho_spec is not None and chart.rho_spec[0] == "radial_poly":
        rho_kind, rho_payload = 1, np.asarray(chart.rho_spec[1], dtype=float)
    else:
        rho_kind, rho_payload = 2, chart.rho.ravel()

    header = _HEADER.pack(
        MAGIC, VERSION, g.n_r, g.n_theta, field.ambient_dim,
        1 if g.includes_disk else 0,
        g.r_min, g.r_max, g.inner_fraction, chart.gamma,
        rho_kind, len(rho_payload),
    )
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(rho_payload.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    if annotations is not None:
        sidecar = path.with_name(path.name + ".json")
        sidecar.write_text(dumps_canonical(annotations) + "\n")


def read_field(path) -> tuple[MapField, dict]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size or raw[:4] != MAGIC:
        raise ConfigError(f"{path} is not a field container")
    (magic, version, n_r, n_theta, ambient, flags,
     r_min, r_max, inner_fraction, gamma, rho_kind, n_rho) = _HEADER.unpack_from(raw)
    if version != VERSION:
        raise ConfigError(f"unsupported field container version {version}")
    off = _HEADER.size
    rho_payload = np.frombuffer(raw, dtype="<f8", count=n_rho, offset=off)
    off += 8 * n_rho
    grid = PolarGrid(r_min, r_max, n_r, n_theta, inner_fraction=inner_fraction)
    if rho_kind == 0:
        chart = ConformalChart.constant(grid, float(rho_payload[0]), gamma)
    elif rho_kind == 1:
        chart = ConformalChart.radial_polynomial(grid, rho_payload.tolist(), gamma)
    else:
        chart = ConformalChart(grid, gamma, rho_payload.reshape(n_r, n_theta).copy())
    count = n_r * n_theta * ambient
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
    field = MapField(chart, values.reshape(n_r, n_theta, ambient).copy(),
                     SphereTarget(ambient))
    sidecar = path.with_name(path.name + ".json")
    annotations = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return field, annotations


def dumps_canonical(obj) -> str:
    """Deterministic JSON: sorted keys, fixed separators, repr floats."""
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ": "), indent=1)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, float) and (obj != obj):  # NaN -> null for valid JSON
        return None
    return obj
