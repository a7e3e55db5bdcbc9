"""Figure rendering for reports and sweeps; every chart lands in a file.

The Agg backend is forced before pyplot loads so rendering works headless,
and identical inputs produce byte-identical PNGs, which keeps figures
inside the re-run determinism contract.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import REPORT_KEYS, EvaluationReport  # noqa: E402
from .tuning import SweepResult  # noqa: E402

__all__ = ["save_c_curve", "save_sweep_bars", "save_report_bars"]

_DPI = 150


def _finish(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_c_curve(trace, path, metric: str = "map", best: float | None = None) -> None:
    """Line chart of the C scan; failed (nan) grid points are skipped."""
    points = [(c, v) for c, v in trace if not math.isnan(v)]
    if not points:
        raise ValueError("trace has no usable points")
    cs = [c for c, _ in points]
    vs = [v for _, v in points]
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(cs, vs, marker="o", color="#1f6fb4")
    if best is not None:
        ax.axvline(best, color="#b44a1f", linestyle="--", linewidth=1.0,
                   label=f"best c={best:g}")
        ax.legend(loc="lower right")
    if max(cs) / max(min(cs), 1e-12) > 50:
        ax.set_xscale("log")
    ax.set_xlabel("c")
    ax.set_ylabel(metric.upper())
    ax.grid(True, alpha=0.3)
    _finish(fig, path)


def save_sweep_bars(result: SweepResult, path, metric: str = "map") -> None:
    """One bar per evaluated setting; failed settings draw at zero height."""
    names = [row.setting for row in result.rows]
    vals = [0.0 if math.isnan(getattr(row, metric)) else getattr(row, metric)
            for row in result.rows]
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    bars = ax.bar(names, vals, color="#1f6fb4")
    for bar, row in zip(bars, result.rows):
        if row.failed:
            bar.set_color("#c0c0c0")
        elif row.setting == result.best.setting:
            bar.set_color("#b44a1f")
    ax.set_ylabel(metric.upper())
    ax.set_ylim(0.0, 1.05)
    for bar, v in zip(bars, vals):
        ax.text(bar.get_x() + bar.get_width() / 2, v + 0.02, f"{v:.3f}",
                ha="center", va="bottom", fontsize=8)
    _finish(fig, path)


def save_report_bars(report: EvaluationReport, path) -> None:
    """All aggregate metrics of one evaluation as a single bar chart."""
    vals = report.aggregate.as_dict()
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    bars = ax.bar(list(REPORT_KEYS), [vals[k] for k in REPORT_KEYS], color="#1f6fb4")
    ax.set_ylabel("fraction")
    ax.set_ylim(0.0, 1.05)
    for bar, key in zip(bars, REPORT_KEYS):
        ax.text(bar.get_x() + bar.get_width() / 2, vals[key] + 0.02,
                f"{vals[key]:.3f}", ha="center", va="bottom", fontsize=8)
    ax.set_title(f"{report.n_queries} queries")
    _finish(fig, path)
