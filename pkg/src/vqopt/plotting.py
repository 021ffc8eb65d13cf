"""SVG figures rendered purely from summary CSVs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .optim import read_summary  # noqa: E402

# fixed salt and no timestamp keep the SVG bytes reproducible
plt.rcParams["svg.hashsalt"] = "vqopt"
plt.rcParams["svg.fonttype"] = "none"

PANELS = {
    "metric": "metric",
    "cost": "exact cost",
    "ratio_avg": "L / L_avg",
    "ratio_max": "L / L_max",
}


def plot_panel(summaries: dict[str, dict], key: str, path, ylabel: str | None = None, xlabel="partial derivative evaluations"):
    """Mean line and min-max band of ``key`` for every labelled summary."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for label, s in summaries.items():
        x = s["partial_evals"]
        ax.plot(x, s[f"{key}_mean"], label=label, linewidth=1.4)
        ax.fill_between(x, s[f"{key}_min"], s[f"{key}_max"], alpha=0.25, linewidth=0)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel or PANELS.get(key, key))
    ax.grid(alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_run(out_dir, labels: list[str], metric_name: str = "metric") -> list[Path]:
    """One SVG per quantity found in every optimizer's summary.csv under ``out_dir``."""
    out_dir = Path(out_dir)
    summaries = {lab: read_summary(out_dir / lab / "summary.csv") for lab in labels}
    written = []
    for key, ylabel in PANELS.items():
        if not all(f"{key}_mean" in s for s in summaries.values()):
            continue
        if key == "metric":
            ylabel = metric_name.replace("_", " ")
        path = out_dir / f"{key}.svg"
        plot_panel(summaries, key, path, ylabel)
        written.append(path)
    return written


def plot_histograms(samples: dict[int, list], path, bins: int = 60) -> None:
    """Grid of per-direction histograms of partial-derivative estimates."""
    keys = sorted(samples)
    cols = min(4, len(keys))
    rows = -(-len(keys) // cols)
    fig, axes = plt.subplots(rows, cols, figsize=(3.0 * cols, 2.4 * rows), squeeze=False)
    for ax, k in zip(axes.flat, keys):
        ax.hist(samples[k], bins=bins, color="tab:blue", alpha=0.8)
        ax.set_title(f"direction {k}", fontsize=9)
    for ax in list(axes.flat)[len(keys):]:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_stability(rows, path) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    a = [r["a_over_bound"] for r in rows]
    p = [r["frequency"] for r in rows]
    err = [r["std_error"] for r in rows]
    ax.errorbar(a, p, yerr=err, marker="o", capsize=3)
    ax.set_xscale("log")
    ax.set_xlabel("learning rate / stability bound")
    ax.set_ylabel("escape frequency")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
