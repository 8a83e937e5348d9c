"""Static figure rendering for the report path.

Every plotting function takes plain arrays plus an output path and writes a
single SVG (or any matplotlib-supported extension) next to the delimited
output it visualises.  The Agg backend is forced so rendering works in
headless runs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KWARGS = {"metadata": {"Date": None}}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    kwargs = _SAVE_KWARGS if path.suffix == ".svg" else {}
    fig.savefig(path, bbox_inches="tight", **kwargs)
    plt.close(fig)
    return path


def save_curves(
    x: np.ndarray,
    series: dict[str, np.ndarray],
    path: str | Path,
    xlabel: str,
    ylabel: str,
    logy: bool = False,
    title: str | None = None,
) -> Path:
    """Line plot with one labelled curve per series; NaN points are skipped."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, values in series.items():
        values = np.asarray(values, dtype=float)
        mask = ~np.isnan(values)
        if not mask.any():
            continue
        ax.plot(np.asarray(x)[mask], values[mask], marker="o", label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return _save(fig, path)


def save_heatmap(
    magnitude: np.ndarray, path: str | Path, title: str | None = None
) -> Path:
    """Magnitude heat map of a transform-domain response matrix."""
    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.imshow(np.asarray(magnitude), origin="upper", aspect="equal", cmap="viridis")
    fig.colorbar(im, ax=ax, label="|entry|")
    ax.set_xlabel("input index")
    ax.set_ylabel("output index")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def save_rank_histogram(
    histograms: dict[str, np.ndarray], path: str | Path, title: str | None = None
) -> Path:
    """Grouped bar chart of effective-rank occurrence fractions."""
    fig, ax = plt.subplots(figsize=(6, 4))
    names = list(histograms)
    max_rank = max(len(h) for h in histograms.values()) - 1
    positions = np.arange(max_rank + 1)
    width = 0.8 / max(len(names), 1)
    for i, name in enumerate(names):
        hist = np.asarray(histograms[name], dtype=float)
        hist = hist / hist.sum() if hist.sum() else hist
        ax.bar(positions + (i - (len(names) - 1) / 2) * width, hist, width, label=name)
    ax.set_xlabel("effective rank")
    ax.set_ylabel("occurrence fraction")
    ax.set_xticks(positions)
    if title:
        ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def save_ccdf(
    samples: dict[str, np.ndarray], path: str | Path, xlabel: str, title: str | None = None
) -> Path:
    """Complementary CDF on log-log axes, one curve per sample set."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, values in samples.items():
        values = np.sort(np.asarray(values, dtype=float))
        ccdf = 1.0 - np.arange(1, values.size + 1) / values.size
        ax.plot(values, ccdf, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("CCDF")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return _save(fig, path)


def save_mip_bars(
    rows: list[dict], path: str | Path, title: str | None = None
) -> Path:
    """Bar chart of dictionary coherence per waveform, grouped by pilot count."""
    fig, ax = plt.subplots(figsize=(6, 4))
    counts = sorted({row["num_pilots"] for row in rows})
    waveforms = sorted({row["waveform"] for row in rows})
    width = 0.8 / max(len(counts), 1)
    positions = np.arange(len(waveforms))
    for i, n_p in enumerate(counts):
        values = [
            next(r["mip"] for r in rows if r["waveform"] == w and r["num_pilots"] == n_p)
            for w in waveforms
        ]
        offset = (i - (len(counts) - 1) / 2) * width
        ax.bar(positions + offset, values, width, label=f"{n_p} pilots")
    ax.set_xticks(positions, waveforms)
    ax.set_ylabel("dictionary coherence")
    if title:
        ax.set_title(title)
    ax.legend()
    return _save(fig, path)
