"""Report figures written next to the CSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.6),
    "figure.dpi": 100,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "savefig.bbox": "tight",
}
# metadata stripped so reruns give identical files
_SAVE_KW = {"metadata": {"Software": None}}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def metric_bars(result, path: Path) -> Path:
    names = ("nmae", "absrel", "delta_125")
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x = np.arange(len(names))
        for i, (label, rep) in enumerate((("Average", result.average), ("Best", result.best))):
            ax.bar(x + (i - 0.5) * 0.38, [rep.mean[m] for m in names], 0.38,
                   yerr=[rep.stderr[m] for m in names], capsize=3, label=label)
        ax.set_xticks(x, ["NMAE", "AbsRel", "δ<1.25"])
        ax.set_title(f"{result.average.n_samples} views")
        ax.legend(frameon=False)
        return _save(fig, path)


def strata_lines(strata: dict, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(strata), figsize=(3.2 * len(strata), 3.0), squeeze=False)
        for ax, (key, bins) in zip(axes[0], strata.items()):
            labels = [f"[{b.lower:g}, {b.upper:g})" for b in bins]
            vals = [np.nan if b.mean_value is None else b.mean_value for b in bins]
            ax.plot(range(len(bins)), vals, "o-")
            for i, b in enumerate(bins):
                ax.annotate(f"n={b.count}", (i, vals[i]), textcoords="offset points", xytext=(0, 5),
                            ha="center", fontsize=7)
            ax.set_xticks(range(len(bins)), labels, rotation=30)
            ax.set_xlabel("APR" if key == "apr" else "curve complexity")
            ax.set_ylabel("mean NMAE")
        return _save(fig, path)


def benchmark_figures(result, out_dir) -> list[Path]:
    out = Path(out_dir)
    return [metric_bars(result, out / "metrics.png"), strata_lines(result.strata, out / "stratification.png")]


def score_figures(reports, out_dir) -> list[Path]:
    out = Path(out_dir)
    apr = np.array([r.apr for r in reports])
    cc = np.array([r.curve_complexity for r in reports])
    with plt.rc_context(STYLE):
        fig, (a, b) = plt.subplots(1, 2, figsize=(7.0, 3.0))
        a.hist(apr, bins=20)
        a.set_xlabel("accidental pixel ratio")
        a.set_ylabel("views")
        b.scatter(cc, apr, s=8, alpha=0.6)
        b.set_xlabel("curve complexity")
        b.set_ylabel("APR")
        return [_save(fig, out / "scores.png")]
