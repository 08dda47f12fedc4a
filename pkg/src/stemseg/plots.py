"""Small SVG figures written next to the JSON reports.

SVG output is made byte-stable: no date metadata and a fixed id salt.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_RC = {"svg.hashsalt": "stemseg", "svg.fonttype": "none"}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def size_histogram_svg(hist: dict, path: str | Path, title: str = "Instance area") -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        edges = hist["edges"]
        ax.bar(edges[:-1], hist["counts"], width=hist["bin_width"], align="edge",
               edgecolor="black", color="#7a9cc6")
        ax.set_xlabel("area (px$^2$)")
        ax.set_ylabel("count")
        if hist.get("mean_area") is not None:
            ax.axvline(hist["mean_area"], color="crimson", lw=1)
        ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def accuracy_curve_svg(xs: list, series: dict[str, list[float]], path: str | Path,
                       xlabel: str = "condition") -> None:
    labels = ["inf" if x is None else str(x) for x in xs]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for name, ys in series.items():
            ax.plot(range(len(xs)), ys, marker="o", label=name)
        ax.set_xticks(range(len(xs)), labels)
        ax.set_xlabel(xlabel)
        ax.set_ylim(0, 1.02)
        ax.legend(loc="lower left")
        fig.tight_layout()
        _save(fig, path)
