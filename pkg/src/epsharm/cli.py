"""Command-line entry point: solve / sequence / synth / analyze / verify / report.

Every command takes one JSON config file (see `epsharm.config.SCHEMA`) and
writes deterministic outputs into the config's output directory: binary field
containers (.ehmf + .json sidecars), canonical-JSON reports, per-k CSV tables,
and (for `report`) PNG figures rendered from the CSV.

Exit codes: 0 success, 1 config error, 2 runtime/analysis error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import bubbling as bb
from . import config as cf
from . import energy as en
from . import solver as sv
from . import synth as sy
from . import tensors as tn
from .errors import ConfigError, EpsharmError
from .fields_io import dumps_canonical, read_field, write_field
from .geometry import MapField, SphereTarget, tangent_project

CSV_COLUMNS = ["k", "eps", "r_k", "mu_k", "nu_k", "E_body", "E_bubble", "E_neck",
               "predicted_neck", "osc", "neck_length", "predicted_length"]


def _out_dir(cfg) -> Path:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(dumps_canonical(obj) + "\n")


def _initial_field(cfg, chart) -> MapField:
    init = cfg["solver"]["initial"]
    ambient = cfg.get("target", {}).get("ambient_dim", 3)
    if init["type"] == "bubble_window":
        bubble = sy.RationalBubble.power(init.get("degree", 1))
        field, _ = sy.bubble_field(bubble, chart, scale=init["scale"])
        return field
    if init["type"] == "noisy_constant":
        point = np.asarray(init["point"], dtype=float)
        field = MapField.constant(chart, point)
        rng = cf.rng_from(cfg)
        noise = init["amplitude"] * rng.standard_normal(field.values.shape)
        vals = field.values + tangent_project(field.values, noise)
        vals[-1] = field.values[-1]
        if not chart.grid.includes_disk:
            vals[0] = field.values[0]
        out = MapField(chart, vals, SphereTarget(point.size))
        return out.project()
    field, _ = read_field(init["path"])
    return field


def _solver_options(cfg) -> sv.SolveOptions:
    s = cfg["solver"]
    kwargs = {}
    for key in ("max_iters", "residual_tol", "gradient_tol", "step_rule"):
        if key in s:
            kwargs[key] = s[key]
    return sv.SolveOptions(**kwargs)


def _solve_report(res: sv.SolveResult) -> dict:
    return {
        "converged": res.converged,
        "iterations": res.iterations,
        "residual_final": res.residual_history[-1],
        "gradient_final": res.gradient_history[-1],
        "residual_history": list(res.residual_history),
        "energy_history": list(res.energy_history),
        "energy": res.energy_report.to_dict(),
        "constraint_violation": res.field.max_constraint_violation(),
    }


def cmd_solve(cfg) -> int:
    cf.require_blocks(cfg, "solve")
    out = _out_dir(cfg)
    grid = cf.build_grid(cfg)
    chart = cf.build_chart(cfg, grid)
    u0 = _initial_field(cfg, chart)
    res = sv.minimize(u0, cfg["solver"]["epsilon"], _solver_options(cfg))
    write_field(out / "solution.ehmf", res.field,
                {"command": "solve", "epsilon": cfg["solver"]["epsilon"]})
    _write_json(out / "solve_report.json", _solve_report(res))
    return 0


def cmd_sequence(cfg) -> int:
    cf.require_blocks(cfg, "sequence")
    out = _out_dir(cfg)
    grid = cf.build_grid(cfg)
    chart = cf.build_chart(cfg, grid)
    u0 = _initial_field(cfg, chart)
    eps_list = cfg["continuation"]["eps_list"]
    results = sv.continuation_solve(u0, eps_list, _solver_options(cfg))
    reports = []
    for k, res in enumerate(results):
        write_field(out / f"sequence_{k:03d}.ehmf", res.field,
                    {"command": "sequence", "k": k, "epsilon": eps_list[k]})
        reports.append({"k": k, "epsilon": eps_list[k], **_solve_report(res)})
    _write_json(out / "sequence_report.json", {"steps": reports})
    return 0


def cmd_synth(cfg) -> int:
    cf.require_blocks(cfg, "synth")
    out = _out_dir(cfg)
    grid = cf.build_grid(cfg)
    chart = cf.build_chart(cfg, grid)
    schedule = cf.build_schedule(cfg)
    alpha = cf.build_alpha_schedule(cfg) if "alpha_schedule" in cfg else None
    spec = cf.build_glue_spec(cfg, schedule, alpha)
    glues = sy.glue_sequence(spec, chart)
    files = []
    for gf in glues:
        name = f"glue_{gf.annotations['k']:03d}.ehmf"
        write_field(out / name, gf.field, gf.annotations)
        files.append(name)
    manifest = {
        "fields": files,
        "schedule": [[e.k, e.eps, e.r] for e in schedule.entries],
        "analytic": None if schedule.analytic is None else {
            "a": schedule.analytic.a, "b": schedule.analytic.b,
            "coeff": schedule.analytic.coeff,
        },
        "glue": {"R": spec.R, "R0": spec.R0, "neck_mode": spec.neck_mode,
                 "family": "alpha" if alpha is not None else "epsilon"},
    }
    _write_json(out / "synth_manifest.json", manifest)
    return 0


def _load_analysis_inputs(cfg, out: Path):
    spec = cfg["analyze"]["inputs"]
    if spec == "from_synth":
        manifest = json.loads((out / "synth_manifest.json").read_text())
        paths = [out / name for name in manifest["fields"]]
    else:
        paths = [Path(p) for p in spec]
    loaded = []
    for p in paths:
        if not p.exists():
            raise EpsharmError(f"missing input field file: {p}")
        loaded.append(read_field(p))
    return loaded


def _schedule_from_annotations(loaded) -> bb.Schedule | None:
    entries = []
    for _, ann in loaded:
        if not {"k", "eps", "r_k"} <= set(ann):
            return None
        entries.append(bb.ScheduleEntry(int(ann["k"]), float(ann["eps"]), float(ann["r_k"])))
    try:
        return bb.Schedule(tuple(entries))
    except ValueError:
        return None


def _analyze_one(field, ann, acfg, schedule):
    """Per-field pipeline: detect, window, decompose, neck geometry."""
    R, R0 = acfg["R"], acfg["R0"]
    det = bb.detect_concentration(field)
    eps = float(ann.get("eps", 0.0))
    # schedule radii take precedence over the detected blow-up normalization
    r_k = float(ann["r_k"]) if "r_k" in ann else det.r
    x_k = tuple(ann.get("x_k", det.x))
    rec = bb.bubble_record(field, x_k, r_k, R, n_r=acfg.get("window_n_r", 256))
    breakdown = bb.energy_decomposition(field, eps, x_k, r_k, R, R0,
                                        bubble_biharmonic=rec.bubble_biharmonic)
    # Neck interior is measured from a factor past the bubble cut; at early k
    # the annulus can be thin, so fall back to the geometric mean of the cuts.
    inner = acfg.get("osc_inner_factor", 2.0) * R * r_k
    if inner >= 0.8 * R0:
        inner = math.sqrt(R * r_k * R0)
    neck = bb.neck_analysis(field, inner, R0, eps, r_k, rec, schedule=schedule)
    row = {
        "k": int(ann.get("k", 0)),
        "eps": eps,
        "r_k": r_k,
        "mu_k": neck.mu,
        "nu_k": neck.nu,
        "E_body": breakdown.body,
        "E_bubble": breakdown.bubble,
        "E_neck": breakdown.neck,
        "predicted_neck": breakdown.predicted_neck,
        "osc": neck.osc,
        "neck_length": neck.measured_length,
        "predicted_length": neck.predicted_length,
    }
    diag = {
        "detection": {"x": list(det.x), "r": det.r,
                      "planted_r": ann.get("detect_radius")},
        "breakdown": breakdown.to_dict(),
        "neck": neck.to_dict(),
        "bubble_record": {
            "dirichlet": rec.bubble_dirichlet,
            "biharmonic": rec.bubble_biharmonic,
            "dirichlet_tail": rec.dirichlet_tail,
            "biharmonic_tail": rec.biharmonic_tail,
        },
    }
    if acfg.get("diagnostics", True):
        se = tn.stress_energy(field, eps)
        diag["stress_energy"] = {
            "trace_s1_max": float(np.abs(se.S1[..., 0, 0] + se.S1[..., 1, 1]).max()),
            "divergence_defect": tn.divergence_defect(field, eps),
        }
        if field.grid.includes_disk:
            t_mid = math.sqrt(inner * R0)
            lhs, rhs, gap, ts = tn.pohozaev_balance(field, eps, t_mid)
            diag["pohozaev"] = {"t": ts, "lhs": lhs, "rhs": rhs, "gap": gap}
            diag["regularity_ratio"] = en.regularity_ratio(field, eps, R * r_k)
    return row, diag


def _write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k) for k in CSV_COLUMNS})


def cmd_analyze(cfg) -> int:
    cf.require_blocks(cfg, "analyze")
    out = _out_dir(cfg)
    loaded = _load_analysis_inputs(cfg, out)
    schedule = _schedule_from_annotations(loaded)
    acfg = cfg["analyze"]

    jobs = [(field, ann) for field, ann in loaded]
    if cfg.get("parallel_k", False) and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=min(4, len(jobs))) as pool:
            results = list(pool.map(
                lambda fa: _analyze_one(fa[0], fa[1], acfg, schedule), jobs))
    else:
        results = [_analyze_one(field, ann, acfg, schedule) for field, ann in jobs]

    rows = [r for r, _ in results]
    diags = [d for _, d in results]
    _write_csv(out / "analysis.csv", rows)
    _write_json(out / "analysis.json", {"rows": rows, "diagnostics": diags})
    return 0


def cmd_verify(cfg) -> int:
    cf.require_blocks(cfg, "verify")
    out = _out_dir(cfg)
    grid = cf.build_grid(cfg)
    chart = cf.build_chart(cfg, grid)
    schedule = cf.build_schedule(cfg)
    family = cfg["verify"]["family"]
    alpha = cf.build_alpha_schedule(cfg) if "alpha_schedule" in cfg else None
    if family == "alpha" and alpha is None:
        raise ConfigError("verify family 'alpha' needs an 'alpha_schedule' section")
    spec = cf.build_glue_spec(cfg, schedule, alpha if family == "alpha" else None)
    glues = sy.glue_sequence(spec, chart)

    acfg = {"inputs": "inline", "R": spec.R, "R0": spec.R0}
    rows, diags, breakdowns, dirichlets = [], [], [], []
    rec = None
    for gf in glues:
        row, diag = _analyze_one(gf.field, gf.annotations, acfg, schedule)
        rows.append(row)
        diags.append(diag)
        breakdowns.append(bb.energy_decomposition(
            gf.field, gf.eps, (0.0, 0.0), gf.annotations["r_k"], spec.R, spec.R0,
            bubble_biharmonic=diag["bubble_record"]["biharmonic"]))
        dirichlets.append(en.dirichlet_energy(gf.field))
        rec = diag["bubble_record"]

    if family == "alpha":
        report = bb.verify_dirichlet_identity_alpha(
            dirichlets, alpha, spec.bubble.dirichlet, 0.0)
    else:
        report = bb.verify_energy_identity(
            breakdowns, schedule, 0.0, spec.bubble.dirichlet,
            rec["biharmonic"], chart.rho_at_origin)

    _write_csv(out / "verify.csv", rows)
    _write_json(out / "verify_verdict.json", report.to_dict())
    _write_json(out / "verify_diagnostics.json", {"diagnostics": diags})
    return 0


def cmd_report(cfg) -> int:
    cf.require_blocks(cfg, "report")
    from . import report as rp

    out = _out_dir(cfg)
    rcfg = cfg["report"]
    if not Path(rcfg["csv"]).exists():
        raise ConfigError(f"report csv not found: {rcfg['csv']}")
    verdict = None
    if "verdict" in rcfg:
        if not Path(rcfg["verdict"]).exists():
            raise ConfigError(f"verdict file not found: {rcfg['verdict']}")
        verdict = json.loads(Path(rcfg["verdict"]).read_text())
    files = rp.render_figures(rcfg["csv"], out, verdict, dpi=rcfg.get("dpi", 110))
    _write_json(out / "report_manifest.json", {"figures": sorted(Path(f).name for f in files)})
    return 0


_COMMANDS = {
    "solve": cmd_solve,
    "sequence": cmd_sequence,
    "synth": cmd_synth,
    "analyze": cmd_analyze,
    "verify": cmd_verify,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="epsharm",
        description="Sphere-valued maps on conformal charts: solver and "
                    "concentration analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} pipeline from a config")
        p.add_argument("config", help="path to the JSON run configuration")
        p.add_argument("--output-dir", help="override the config's output_dir")
    args = parser.parse_args(argv)

    try:
        cfg = cf.load_config(args.config)
        if args.output_dir:
            cfg["output_dir"] = args.output_dir
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except EpsharmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
