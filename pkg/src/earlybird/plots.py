"""Optional SVG renderings of the emitted CSV data.

Output is byte-stable: fixed hash salt and no date metadata.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["svg.hashsalt"] = "earlybird"
plt.rcParams["svg.fonttype"] = "none"

_SVG_META = {"Date": None, "Creator": None}


def percentile_plot(path, iterations, series: dict[str, list[float]], title: str = ""):
    fig, ax = plt.subplots(figsize=(8, 4))
    for label, ys in series.items():
        ax.plot(iterations, ys, label=label, linewidth=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("compute time (ms)")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def histogram_plot(path, lowers_ms, counts, width_ms: float, title: str = ""):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(lowers_ms, counts, width=width_ms, align="edge", linewidth=0)
    ax.set_xlabel("compute time (ms)")
    ax.set_ylabel("threads")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
