"""Static SVG figures with byte-stable output."""

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .zones import ZONE_ORDER  # noqa: E402

SALT = "deul"


def _save(fig, path):
    with matplotlib.rc_context({"svg.hashsalt": SALT, "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def emit_plot(series_list, path, guides=None, title=None, xlabel="t", ylabel="norm"):
    """Log-log decay curves with a slope guide per series.

    guides maps a label to a slope; series without one get their own fitted slope.
    """
    series_list = [s for s in series_list if len(s.t)]
    if not series_list:
        raise ValueError("nothing to plot")
    guides = guides or {}
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for s in series_list:
        keep = (np.asarray(s.t) > 0) & (np.asarray(s.value) > 0)
        t, v = np.asarray(s.t)[keep], np.asarray(s.value)[keep]
        if t.size == 0:
            continue
        (line,) = ax.loglog(t, v, label=s.label)
        slope = guides.get(s.label)
        if slope is None:
            slope = float(np.polyfit(np.log(t), np.log(v), 1)[0]) if t.size > 1 else 0.0
            if abs(slope) < 1e-12:
                slope = 0.0
        # anchor the guide at the last point, offset downward for legibility
        g = 0.5 * v[-1] * (t / t[-1]) ** slope
        ax.loglog(t, g, ls="--", lw=0.8, color=line.get_color(), label=f"slope {slope:.3g}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    _save(fig, path)


def plot_atlas(ts, ks, codes, path, title=None):
    """Zone raster over a log (t, k) grid; codes shaped (len(ts), len(ks))."""
    codes = np.asarray(codes)
    if codes.size == 0:
        raise ValueError("empty atlas")
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    cmap = plt.get_cmap("viridis", len(ZONE_ORDER))
    mesh = ax.pcolormesh(ts, ks, codes.T, cmap=cmap, vmin=-0.5, vmax=len(ZONE_ORDER) - 0.5, shading="nearest")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("k")
    cb = fig.colorbar(mesh, ax=ax, ticks=range(len(ZONE_ORDER)))
    cb.ax.set_yticklabels([z.value for z in ZONE_ORDER])
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_ratios(reports, path):
    """Max ratio per envelope claim as a horizontal bar chart with the unit line."""
    if not reports:
        raise ValueError("no reports")
    fig, ax = plt.subplots(figsize=(6.4, 0.3 * len(reports) + 1.5))
    y = np.arange(len(reports))
    ax.barh(y, [r.max_ratio for r in reports], color=["C0" if r.passed else "C3" for r in reports])
    ax.axvline(1.0, color="k", lw=0.8)
    ax.set_yticks(y)
    ax.set_yticklabels([r.claim for r in reports], fontsize=6)
    ax.set_xscale("log")
    ax.set_xlabel("max ratio")
    fig.tight_layout()
    _save(fig, path)
