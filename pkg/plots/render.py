#!/usr/bin/env python3
"""Render figures from a study output directory (stats.csv + summary.json).

This script consumes the simulator's published file contract and nothing
else: curves are plotted exactly as written by the study drivers, with no
statistics recomputed here. Rendering is deterministic (fixed figure
geometry and fonts, no timestamps, PNG metadata stripped), so rerunning on
the same inputs reproduces the PNG byte for byte.

Figure kinds:
  gap              mean total queue per policy, bound-curve overlay, shaded
                   validity window (deterministic two-queue study)
  gap-noise        same layout for the noisy variant, SE bands visible
  trajectory-total mean total queue per policy with SE bands
  trajectory-sumsq mean sum of squared queue lengths per policy

Exit codes: 0 ok, 2 bad input (schema mismatch, empty data, missing file,
unknown study), 3 digest mismatch between summary.json and stats.csv.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

EXPECTED_COLUMNS = ["t", "policy", "mean_total", "se_total", "mean_sumsq"]

#: Rows carrying reference curves rather than simulated policies.
OVERLAY_POLICIES = {"thm5_bound", "overshoot_mc"}

POLICY_COLORS = {
    "maxweight": "#d62728",
    "lyapopt": "#1f77b4",
    "random_vertex": "#2ca02c",
    "fixed_schedule": "#9467bd",
}
FALLBACK_COLORS = ["#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"]

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "spnsched-plots",
}


class InputError(Exception):
    def __init__(self, message: str, code: int = 2):
        super().__init__(message)
        self.code = code


def read_stats(path: Path) -> tuple[str, list[dict]]:
    """Parse stats.csv: digest comment, fixed header, float/str rows."""
    if not path.is_file():
        raise InputError(f"missing input file {path}")
    with path.open(newline="") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith("# config_digest="):
            raise InputError(f"{path} lacks the config_digest lead line")
        digest = first.split("=", 1)[1]
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path} has no header row") from None
        if header != EXPECTED_COLUMNS:
            missing = [c for c in EXPECTED_COLUMNS if c not in header]
            unexpected = [c for c in header if c not in EXPECTED_COLUMNS]
            raise InputError(
                f"{path} schema mismatch: missing columns {missing}, "
                f"unexpected columns {unexpected}")
        rows = []
        for rec in reader:
            if not rec:
                continue
            rows.append({
                "t": int(rec[0]),
                "policy": rec[1],
                "mean_total": float(rec[2]),
                "se_total": float(rec[3]),
                "mean_sumsq": float(rec[4]),
            })
    if not rows:
        raise InputError(f"{path} contains no data rows")
    return digest, rows


def load_inputs(indir: Path) -> tuple[dict, list[dict]]:
    digest, rows = read_stats(indir / "stats.csv")
    summary_path = indir / "summary.json"
    if not summary_path.is_file():
        raise InputError(f"missing input file {summary_path}")
    try:
        summary = json.loads(summary_path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{summary_path} is not valid JSON: {exc}") from exc
    if summary.get("config_digest") != digest:
        raise InputError(
            f"config digest mismatch: summary.json has "
            f"{summary.get('config_digest')!r}, stats.csv has {digest!r}",
            code=3)
    return summary, rows


def split_series(rows: list[dict]) -> tuple[dict, dict]:
    """Group rows by policy label, keeping file order along t."""
    policies: dict[str, dict] = {}
    overlays: dict[str, dict] = {}
    for row in rows:
        target = overlays if row["policy"] in OVERLAY_POLICIES else policies
        series = target.setdefault(
            row["policy"],
            {"t": [], "mean_total": [], "se_total": [], "mean_sumsq": []})
        for key in ("t", "mean_total", "se_total", "mean_sumsq"):
            series[key].append(row[key])
    return policies, overlays


def policy_color(name: str, index: int) -> str:
    return POLICY_COLORS.get(name, FALLBACK_COLORS[index % len(FALLBACK_COLORS)])


def draw_curves(ax, policies: dict, value_key: str, band: bool) -> None:
    for i, (name, series) in enumerate(sorted(policies.items())):
        color = policy_color(name, i)
        ax.plot(series["t"], series[value_key], label=name, color=color,
                linewidth=1.4)
        if band and value_key == "mean_total":
            lo = [m - s for m, s in zip(series["mean_total"], series["se_total"])]
            hi = [m + s for m, s in zip(series["mean_total"], series["se_total"])]
            ax.fill_between(series["t"], lo, hi, color=color, alpha=0.2,
                            linewidth=0)


def render_gap(ax, summary: dict, policies: dict, overlays: dict) -> None:
    draw_curves(ax, policies, "mean_total", band=True)
    bound = overlays.get("thm5_bound")
    if bound is not None:
        ax.plot(bound["t"], bound["mean_total"], color="black",
                linestyle="--", linewidth=1.2, label="lower bound")
    window = summary.get("window")
    if window:
        lo, hi = window
        t_max = max((max(s["t"]) for s in policies.values()), default=None)
        if t_max is not None:
            hi = min(hi, t_max)
        if hi > lo:
            ax.axvspan(lo, hi, color="gray", alpha=0.15, linewidth=0,
                       label="bound window")
    ax.set_ylabel("mean total queue length")


def render_trajectory(ax, policies: dict, value_key: str) -> None:
    draw_curves(ax, policies, value_key, band=value_key == "mean_total")
    label = ("mean total queue length" if value_key == "mean_total"
             else "mean sum of squared queue lengths")
    ax.set_ylabel(label)


def figure_title(study: str, summary: dict) -> str:
    config = summary.get("config", {})
    parts = [summary.get("study", study)]
    for key in ("n", "B", "C", "T", "replications"):
        if key in config:
            parts.append(f"{key}={config[key]}")
    return "  ".join(str(p) for p in parts)


def render(study: str, indir: Path, outdir: Path) -> Path:
    summary, rows = load_inputs(indir)
    policies, overlays = split_series(rows)
    if study in ("gap", "gap-noise") and not policies:
        raise InputError("no policy curves to plot")

    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if study in ("gap", "gap-noise"):
            render_gap(ax, summary, policies, overlays)
        elif study == "trajectory-total":
            render_trajectory(ax, policies, "mean_total")
        elif study == "trajectory-sumsq":
            render_trajectory(ax, policies, "mean_sumsq")
        else:
            raise InputError(f"unknown study kind {study!r}")
        ax.set_xlabel("t (slots)")
        ax.set_title(figure_title(study, summary))
        ax.legend(loc="upper left", frameon=False)
        fig.tight_layout()

        outdir.mkdir(parents=True, exist_ok=True)
        out_path = outdir / (study.replace("-", "_") + ".png")
        # a None Software entry drops matplotlib's version string from the
        # PNG text chunk, which would otherwise vary across environments
        fig.savefig(out_path, metadata={"Software": None})
        plt.close(fig)
    return out_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="render a figure from a study output directory")
    parser.add_argument("--study", required=True,
                        choices=["gap", "gap-noise", "trajectory-total",
                                 "trajectory-sumsq"])
    parser.add_argument("--in", dest="indir", required=True,
                        help="directory holding stats.csv and summary.json")
    parser.add_argument("--out", dest="outdir", required=True,
                        help="directory the PNG is written into")
    args = parser.parse_args(argv)
    try:
        out_path = render(args.study, Path(args.indir), Path(args.outdir))
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    print(out_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
