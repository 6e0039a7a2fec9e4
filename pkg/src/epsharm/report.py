"""Figure rendering for analysis outputs: per-k trend plots from the CSV
tables, written next to the delimited output."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_rows(csv_path) -> list[dict]:
    with open(csv_path, newline="") as fh:
        return [
            {k: (float(v) if v not in ("", "None") else float("nan")) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]


def render_figures(csv_path, out_dir, verdict: dict | None = None, dpi: int = 110) -> list[str]:
    """Render the standard trend figures; returns the written file names."""
    rows = read_rows(csv_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ks = [r["k"] for r in rows]
    written = []

    def save(fig, name):
        p = out_dir / name
        fig.savefig(p, dpi=dpi, bbox_inches="tight")
        plt.close(fig)
        written.append(str(p))

    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for key, style in (("E_body", "s-"), ("E_bubble", "o-"), ("E_neck", "d-"),
                       ("predicted_neck", "d--")):
        ax.semilogy(ks, [max(r[key], 1e-16) for r in rows], style, label=key, ms=4)
    ax.set_xlabel("k")
    ax.set_ylabel("energy")
    ax.legend(fontsize=8)
    ax.set_title("energy split per step")
    save(fig, "energy_split.png")

    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.plot(ks, [r["neck_length"] for r in rows], "o-", label="measured length", ms=4)
    ax.plot(ks, [r["predicted_length"] for r in rows], "x--", label="predicted length", ms=5)
    ax.plot(ks, [r["osc"] for r in rows], "s-", label="oscillation", ms=4)
    ax.set_xlabel("k")
    ax.set_ylabel("length / oscillation")
    ax.legend(fontsize=8)
    ax.set_title("neck geometry per step")
    save(fig, "neck_geometry.png")

    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.semilogy(ks, [max(r["mu_k"], 1e-16) for r in rows], "o-", label="mu_k", ms=4)
    ax.semilogy(ks, [max(r["nu_k"], 1e-16) for r in rows], "s-", label="nu_k", ms=4)
    ax.set_xlabel("k")
    ax.set_ylabel("ratio")
    ax.legend(fontsize=8)
    ax.set_title("classifying ratios")
    save(fig, "mu_nu.png")

    if verdict and verdict.get("rows"):
        vrows = verdict["rows"]
        fig, ax = plt.subplots(figsize=(5.2, 3.6))
        kk = [r["k"] for r in vrows]
        gaps = [abs(r.get("gap_to_limit", float("nan"))) for r in vrows]
        ax.semilogy(kk, [max(g, 1e-16) for g in gaps], "o-", ms=4,
                    label="|measured - predicted limit|")
        ax.set_xlabel("k")
        ax.set_ylabel("gap")
        ax.legend(fontsize=8)
        ax.set_title(verdict.get("identity", "identity") + f" ({verdict.get('verdict', '')})")
        save(fig, "identity_gap.png")
    return written
