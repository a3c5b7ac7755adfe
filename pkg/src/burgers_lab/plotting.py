"""Figure rendering for experiment reports.

Every CLI run that writes a CSV series also renders the matching figure to
a PNG next to it.  Output is deterministic: the Agg backend, a fixed style,
and stripped PNG metadata, so re-runs with the same seed are bit-identical.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_report", "render_profile", "save_deterministic"]

plt.rcParams.update({
    "figure.figsize": (6.0, 3.8),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
})


def save_deterministic(fig, path: Path) -> Path:
    fig.savefig(path, dpi=120, metadata={"Software": None}, bbox_inches="tight")
    plt.close(fig)
    return path


def _plot_series(ax, report, x_col, y_col, **kw):
    ax.plot(report.series[x_col], report.series[y_col], **kw)
    ax.set_xlabel(x_col)


def render_report(report, out_path) -> Path:
    """Render the series of one ExperimentReport to a PNG."""
    out_path = Path(out_path)
    fig, ax = plt.subplots()
    name = report.name

    if name == "mixing":
        _plot_series(ax, report, "t", "distance", marker="o", label="estimator")
        ax.plot(report.series["t"], [2 * f for f in report.series["noise_floor"]],
                ls="--", color="gray", label="2x noise floor")
        ax.set_ylabel("dual-Lipschitz estimate")
        ax.legend()
    elif name == "contraction":
        _plot_series(ax, report, "t", "mean_distance", label="mean L1 distance")
        _plot_series(ax, report, "t", "max_distance", ls="--", label="max L1 distance")
        ax.set_yscale("log")
        ax.set_ylabel("pair L1 distance")
        ax.legend()
    elif name == "recurrence":
        m_vals = sorted(set(report.series["m"]))
        mm = np.asarray(report.series["m"])
        tt = np.asarray(report.series["t"])
        ss = np.asarray(report.series["survival"])
        for m in m_vals:
            sel = mm == m
            ax.step(tt[sel], ss[sel], where="post", label=f"m={m}")
        ax.set_xlabel("t")
        ax.set_ylabel("P(hitting time > t)")
        ax.legend()
    elif name == "energy":
        _plot_series(ax, report, "t", "avg_v2", label="unit-time block mean")
        ax.axhline(report.details["target_v2"], color="k", ls=":",
                   label="stationary balance level")
        ax.set_ylabel("||u||_V^2 block average")
        ax.legend()
    elif name == "regularize":
        _plot_series(ax, report, "t", "rough_v_max", marker="o", label="rough start, max")
        _plot_series(ax, report, "t", "rough_v_mean", marker="o", label="rough start, mean")
        _plot_series(ax, report, "t", "smooth_v_max", ls="--", label="smooth start, max")
        ax.set_xscale("symlog", linthresh=1e-3)
        ax.set_yscale("log")
        ax.set_ylabel("V norm")
        ax.legend()
    elif name == "semigroup-norms":
        ax.loglog(report.series["t"], report.series["norm"], label="operator norm")
        ax.loglog(report.series["t"], report.series["reference"], ls="--",
                  label="C t^{-(target-source)/2}")
        ax.set_xlabel("t")
        ax.set_ylabel("norm")
        ax.legend()
    elif name == "control":
        tt = report.series["t"]
        ax.plot(tt, report.series["zeta1"], label="zeta1", marker=".")
        ax.plot(tt, report.series["zeta2"], label="zeta2", marker=".")
        ax.set_xlabel("t")
        ax.set_ylabel("control knot value")
        ax.legend()
    elif name == "simulate":
        for col in ("l2", "v"):
            if col in report.series:
                ax.plot(report.series["t"], report.series[col], label=col)
        ax.set_xlabel("t")
        ax.set_ylabel("norm")
        ax.legend()
    elif name == "ensemble":
        ax.hist(report.details.get("v_norms", []), bins=24)
        ax.set_xlabel("V norm")
        ax.set_ylabel("members")
    else:
        cols = [c for c in report.series if c != "t"]
        for c in cols[:4]:
            ax.plot(report.series.get("t", range(len(report.series[c]))),
                    report.series[c], label=c)
        ax.legend()
    ax.set_title(f"{name}  [{report.config_hash}]")
    return save_deterministic(fig, out_path)


def render_profile(coeffs: np.ndarray, out_path, label: str = "u") -> Path:
    """Plot a single state on a fine grid."""
    from burgers_lab.spectral import values_on_grid

    out_path = Path(out_path)
    vals = values_on_grid(np.asarray(coeffs), refine=4)
    x = np.linspace(0, np.pi, len(vals) + 2)[1:-1]
    fig, ax = plt.subplots()
    ax.plot(x, vals)
    ax.set_xlabel("x")
    ax.set_ylabel(label)
    return save_deterministic(fig, out_path)
