"""PNG figures written next to the CSV tables (matplotlib, Agg backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .spectral import Grid1D, synthesize  # noqa: E402


def _rate(ax, item):
    x, y = np.asarray(item["x"], float), np.asarray(item["y"], float)
    if "ylo" in item:
        lo = np.maximum(np.asarray(item["ylo"], float), y * 1e-3)
        hi = np.asarray(item["yhi"], float)
        ax.errorbar(x, y, yerr=[y - lo, hi - y], fmt="o-", capsize=3, label=item.get("labels", ["y"])[0])
    else:
        ax.plot(x, y, "o-", label=item.get("labels", ["y"])[0])
    if "y2" in item:
        ax.plot(x, item["y2"], "s--", label=item.get("labels", ["", "y2"])[1])
    if "fit" in item:
        f = item["fit"]
        ax.plot(x, np.exp(f["intercept"]) * x ** f["slope"], "k:",
                label=f"slope {f['slope']:.2f}")
    if np.all(y > 0):
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.legend()


def _snapshots(ax, item):
    g = Grid1D(256)
    x = np.r_[0.0, g.nodes, 1.0]
    for t, a in zip(item["t"], item["coeffs"]):
        ax.plot(x, np.r_[0.0, synthesize(np.asarray(a), g), 0.0], label=f"t={t:.3g}")
    ax.set_xlabel("x")
    ax.set_ylabel("Y(t, x)")
    if len(item["t"]) <= 12:
        ax.legend(fontsize=7)


def _loglog_multi(ax, item):
    x = np.asarray(item["x"], float)
    for name, y in item["series"].items():
        ax.loglog(x, y, "o-", label=name)
    ax.legend()


def _bars(ax, item):
    x = np.arange(len(item["x"]))
    y = np.asarray(item["y"], float)
    ax.bar(x, y, yerr=[y - np.asarray(item["ylo"]), np.asarray(item["yhi"]) - y], capsize=3)
    ax.set_xticks(x, [str(v) for v in item["x"]])


_DRAW = {"rate": _rate, "snapshots": _snapshots, "loglog_multi": _loglog_multi, "bars": _bars}


def render(plots, out_dir) -> list[str]:
    """Draw every plot item; returns the written file names."""
    out_dir = Path(out_dir)
    written = []
    for item in plots:
        fig, ax = plt.subplots(figsize=(5.5, 4.0))
        _DRAW[item["kind"]](ax, item)
        if item["kind"] != "snapshots":
            ax.set_xlabel(item.get("xlabel", ""))
            ax.set_ylabel(item.get("ylabel", ""))
        fig.tight_layout()
        fig.savefig(out_dir / item["file"], dpi=110)
        plt.close(fig)
        written.append(item["file"])
    return written
