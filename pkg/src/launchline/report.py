"""CSV tables, text summaries and PNG figures for command-line runs."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

HISTORY_FIELDS = ("k", "best_cost", "mean_cost", "gamma_bar", "temperature", "N", "M", "wall_time")
COMPARE_FIELDS = ("policy", "srm_capacity", "mean_cost", "ci_low", "ci_high", "samples")
PER_YEAR_FIELDS = ("year", "storage", "anticipated_lateness", "unexpected_lateness", "penalty", "total")


def _fmt(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_history(path: Path, history: list[dict], timestamps: bool = True) -> None:
    rows = []
    for h in history:
        rows.append([
            h["k"], h["best_cost"], h["mean_cost"], h.get("gamma_bar", ""),
            h.get("temperature", ""), h["N"], h["M"], h["wall_time"] if timestamps else "",
        ])
    write_csv(path, HISTORY_FIELDS, rows)


def write_per_year(path: Path, per_year) -> None:
    write_csv(path, PER_YEAR_FIELDS, (
        (t, c.storage, c.anticipated_lateness, c.unexpected_lateness, c.penalty, c.total)
        for t, c in enumerate(per_year, start=1)
    ))


def write_compare(path: Path, rows) -> None:
    write_csv(path, COMPARE_FIELDS, (
        (r.policy, r.srm_capacity, r.mean, r.ci_low, r.ci_high, r.samples) for r in rows
    ))


def compare_table(rows) -> str:
    """Two-by-two text table: policy rows, SRM capacity columns."""
    cell = {(r.policy, r.srm_capacity): r.mean for r in rows}
    lines = [f"{'':<10}{'capacity 4':>16}{'capacity 8':>16}"]
    for name in ("naive", "optimized"):
        lines.append(f"{name:<10}" + "".join(f"{cell.get((name, c), float('nan')):>16,.0f}" for c in (4, 8)))
    return "\n".join(lines)


# -- figures -----------------------------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: Path) -> None:
    # no software/date metadata, so identical runs give identical files
    fig.savefig(path, dpi=100, metadata={"Software": None})
    fig.clf()


def plot_history(path: Path, history: list[dict], title: str) -> None:
    plt = _pyplot()
    k = [h["k"] for h in history]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(k, [h["mean_cost"] for h in history], label="mean sampled cost", lw=1)
    ax.plot(k, [h["best_cost"] for h in history], label="running best", lw=2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("cost")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_compare(path: Path, rows) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.38
    for off, name in ((-width / 2, "naive"), (width / 2, "optimized")):
        sel = [r for r in rows if r.policy == name]
        x = np.array([0 if r.srm_capacity == 4 else 1 for r in sel]) + off
        err = [[r.mean - r.ci_low for r in sel], [r.ci_high - r.mean for r in sel]]
        ax.bar(x, [r.mean for r in sel], width, yerr=err, label=name)
    ax.set_xticks([0, 1], ["capacity 4", "capacity 8"])
    ax.set_ylabel("mean cost")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_trace(path: Path, trace: np.ndarray, year_ticks: int) -> None:
    from .simulator import TRACE_COLUMNS

    plt = _pyplot()
    col = {name: i for i, name in enumerate(TRACE_COLUMNS)}
    years = trace[:, col["tick"]] / year_ticks
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for name in ("imc", "llpm", "ulpm", "srm"):
        a1.step(years, trace[:, col[name]], where="post", label=name.upper(), lw=0.8)
    a1.set_ylabel("stock")
    a1.legend(ncol=4, fontsize="small")
    cum = trace[:, col["storage_cost"]] + trace[:, col["anticipated_cost"]] + trace[:, col["unexpected_cost"]]
    a2.plot(years, cum, lw=1)
    a2.set_xlabel("year")
    a2.set_ylabel("cumulative cost")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)
