"""Three-panel figures from sweep CSVs.

fig1: (a) mean squared overlap vs delta per d for the quadratic sweep,
(b) the same for the truncated sweep, (c) delta* vs log d per target with the
fitted lines.  fig2: (a) squared overlap vs step and (b) norm vs step from
the per-cell mean trajectories, (c) T* vs log d with fitted lines.

The renderer is a pure function of its input files: it performs no fitting
or averaging; fitted lines and their annotated slopes are read from the fit
CSVs verbatim.
"""

from __future__ import annotations

import csv
import os
import re
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

SUMMARY_HEADER = (
    "method,d,delta,M,seeds,mean_sq_overlap,std_sq_overlap,mean_t_angle,"
    "mean_t_norm,failures"
)
TRAJ_HEADER = "t,overlap,sq_overlap,angle,norm,loss,dist_sq"
FIT_POINTS_HEADER = "kind,target,d,value"
FIT_LINES_HEADER = "kind,target,slope,intercept,r2"

TRAJ_NAME = re.compile(r"_d(\d+)_delta[^_]+_M[^_]+_smean\.csv$")


class RenderError(ValueError):
    pass


def _check_header(path, got, expected):
    if got == expected:
        return
    got_cols = got.split(",")
    exp_cols = expected.split(",")
    for i, col in enumerate(exp_cols):
        if i >= len(got_cols) or got_cols[i] != col:
            found = got_cols[i] if i < len(got_cols) else "<missing>"
            raise RenderError(
                f"{path}: expected column {i + 1} to be {col!r}, found {found!r}"
            )
    raise RenderError(f"{path}: unexpected extra columns {got_cols[len(exp_cols):]}")


def _read_csv(path, expected_header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise RenderError(f"{path}: empty file") from None
        _check_header(path, ",".join(header), expected_header)
        rows = [row for row in reader if row]
    if not rows:
        raise RenderError(f"{path}: no rows")
    return header, rows


def load_summary(path):
    """(d, delta, mean, std, seeds) arrays keyed by d."""
    _, rows = _read_csv(path, SUMMARY_HEADER)
    by_d = {}
    for r in rows:
        by_d.setdefault(int(r[1]), []).append(
            (float(r[2]), float(r[5]), float(r[6]), int(r[4]))
        )
    out = {}
    for d, vals in by_d.items():
        vals.sort()
        arr = np.array(vals)
        out[d] = {
            "delta": arr[:, 0], "mean": arr[:, 1], "std": arr[:, 2], "seeds": arr[:, 3],
        }
    return out


def load_fit_points(path):
    _, rows = _read_csv(path, FIT_POINTS_HEADER)
    out = {}
    for r in rows:
        out.setdefault(float(r[1]), []).append((int(r[2]), float(r[3])))
    for pts in out.values():
        pts.sort()
    return out


def load_fit_lines(path):
    _, rows = _read_csv(path, FIT_LINES_HEADER)
    return {float(r[1]): (float(r[2]), float(r[3]), float(r[4])) for r in rows}


def load_mean_trajectories(directory):
    """Per-cell mean trajectory files ``*_smean.csv``, keyed by d."""
    if not os.path.isdir(directory):
        raise RenderError(f"{directory}: not a directory of trajectory CSVs")
    out = {}
    for name in sorted(os.listdir(directory)):
        m = TRAJ_NAME.search(name)
        if not m:
            continue
        _, rows = _read_csv(os.path.join(directory, name), TRAJ_HEADER)
        arr = np.array(rows, dtype=float)
        out[int(m.group(1))] = arr
    if not out:
        raise RenderError(f"{directory}: no *_smean.csv trajectory files found")
    return out


@dataclass(frozen=True)
class FigureSpec:
    figure: str  # "fig1" | "fig2"
    summaries: tuple  # fig1: (quadratic csv, truncated csv); fig2: (traj dir,)
    fit_points: str
    fit_lines: str
    out: str
    panels: tuple = ("a", "b", "c")
    log_delta: bool = False


@dataclass
class RenderResult:
    path: str
    annotations: dict = field(default_factory=dict)  # target -> slope string


def _d_colors(ds):
    cmap = plt.get_cmap("viridis")
    return {d: cmap(0.15 + 0.7 * i / max(1, len(ds) - 1)) for i, d in enumerate(sorted(ds))}


def _panel_overlap_vs_delta(ax, summary, title, log_delta):
    colors = _d_colors(summary.keys())
    for d in sorted(summary):
        s = summary[d]
        err = s["std"] / np.sqrt(np.maximum(s["seeds"], 1))
        ax.errorbar(s["delta"], s["mean"], yerr=err, marker="o", ms=3,
                    lw=1.2, capsize=2, color=colors[d], label=f"d = {d}")
    if log_delta:
        ax.set_xscale("log")
    ax.set_xlabel(r"$\delta = n/d$")
    ax.set_ylabel("squared overlap")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(title)
    ax.legend(fontsize=8)


def _panel_fit(ax, points, lines, ylabel):
    annotations = {}
    targets = sorted(points)
    cmap = plt.get_cmap("plasma")
    for i, tgt in enumerate(targets):
        pts = points[tgt]
        x = np.log([p[0] for p in pts])
        y = [p[1] for p in pts]
        color = cmap(0.1 + 0.8 * i / max(1, len(targets) - 1))
        ax.plot(x, y, "o", ms=4, color=color, label=f"target {tgt:g}")
        if tgt in lines:
            slope, intercept, _ = lines[tgt]
            xs = np.linspace(x.min(), x.max(), 50)
            ax.plot(xs, slope * xs + intercept, "-", lw=1.2, color=color)
            annotations[tgt] = f"{slope:.3f}"
    text = "\n".join(f"target {t:g}: slope {annotations[t]}" for t in targets if t in annotations)
    ax.text(0.03, 0.97, text, transform=ax.transAxes, va="top", fontsize=7,
            bbox=dict(boxstyle="round", fc="white", alpha=0.8))
    ax.set_xlabel(r"$\log d$")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=7, loc="lower right")
    return annotations


def _render_fig1(spec: FigureSpec) -> RenderResult:
    if len(spec.summaries) != 2:
        raise RenderError("fig1 needs two summary CSVs: quadratic, truncated")
    n_panels = len(spec.panels)
    fig, axes = plt.subplots(1, n_panels, figsize=(4.2 * n_panels, 3.4))
    axes = np.atleast_1d(axes)
    result = RenderResult(path=spec.out)
    idx = 0
    if "a" in spec.panels:
        _panel_overlap_vs_delta(
            axes[idx], load_summary(spec.summaries[0]),
            r"quadratic $\sigma(z) = z^2$", spec.log_delta,
        )
        idx += 1
    if "b" in spec.panels:
        _panel_overlap_vs_delta(
            axes[idx], load_summary(spec.summaries[1]),
            r"truncated ($M = 8$)", spec.log_delta,
        )
        idx += 1
    if "c" in spec.panels:
        result.annotations = _panel_fit(
            axes[idx], load_fit_points(spec.fit_points), load_fit_lines(spec.fit_lines),
            r"$\delta^\ast$",
        )
    fig.tight_layout()
    fig.savefig(spec.out, dpi=150, metadata={})
    plt.close(fig)
    return result


def _panel_trajectory(ax, trajs, col, ylabel):
    colors = _d_colors(trajs.keys())
    for d in sorted(trajs):
        arr = trajs[d]
        t = np.maximum(arr[:, 0], 1.0)  # log axis; step 0 plotted at 1
        ax.plot(t, arr[:, col], lw=1.3, color=colors[d], label=f"d = {d}")
    ax.set_xscale("log")
    ax.set_xlabel("t (GD steps)")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)


def _render_fig2(spec: FigureSpec) -> RenderResult:
    trajs = load_mean_trajectories(spec.summaries[0])
    n_panels = len(spec.panels)
    fig, axes = plt.subplots(1, n_panels, figsize=(4.2 * n_panels, 3.4))
    axes = np.atleast_1d(axes)
    result = RenderResult(path=spec.out)
    idx = 0
    if "a" in spec.panels:
        _panel_trajectory(axes[idx], trajs, 2, "squared overlap")
        idx += 1
    if "b" in spec.panels:
        _panel_trajectory(axes[idx], trajs, 4, r"$\|\theta_t\|$")
        idx += 1
    if "c" in spec.panels:
        result.annotations = _panel_fit(
            axes[idx], load_fit_points(spec.fit_points), load_fit_lines(spec.fit_lines),
            r"$T^\ast$",
        )
    fig.tight_layout()
    fig.savefig(spec.out, dpi=150, metadata={})
    plt.close(fig)
    return result


def render(spec: FigureSpec) -> RenderResult:
    if spec.figure == "fig1":
        return _render_fig1(spec)
    if spec.figure == "fig2":
        return _render_fig2(spec)
    raise RenderError(f"unknown figure {spec.figure!r}")
