"""Evaluation reports: delimited results, a readable table, and figures.

Every eval run writes one machine-readable JSONL file (per-item rows then
a summary row), a plain-text table, and PNG figures rendered with the Agg
backend so reports work headless.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def write_results_jsonl(
    path: str | Path,
    rows: Sequence[Mapping],
    summary: Mapping,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps({"kind": "item", **row}, ensure_ascii=False))
            handle.write("\n")
        handle.write(json.dumps(
            {"kind": "summary", **summary}, ensure_ascii=False
        ))
        handle.write("\n")


def format_table(
    rows: Mapping[str, Mapping[str, float]],
    columns: Sequence[str],
    row_header: str = "setting",
) -> str:
    """Fixed-width text table: one line per row, one column per metric."""
    widths = [max(len(row_header), *(len(name) for name in rows))]
    for column in columns:
        widths.append(max(len(column), 8))
    header = "  ".join(
        name.ljust(width)
        for name, width in zip([row_header, *columns], widths)
    )
    lines = [header, "-" * len(header)]
    for name, metrics in rows.items():
        cells = [name.ljust(widths[0])]
        for column, width in zip(columns, widths[1:]):
            cells.append(f"{metrics[column]:.4f}".ljust(width))
        lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"


def plot_lambda_sweep(
    table: Sequence[tuple[float, float]],
    metric_name: str,
    path: str | Path,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    xs = [row[0] for row in table]
    ys = [row[1] for row in table]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, ys, marker="o")
    best = min(table, key=lambda row: (-row[1], row[0]))
    ax.axvline(best[0], linestyle="--", linewidth=1, alpha=0.6)
    ax.set_xlabel("mixing weight (semantic share)")
    ax.set_ylabel(metric_name)
    ax.set_title("Mixing-weight sweep")
    ax.set_xlim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_ablation(
    grid: Mapping[str, Mapping[str, float]],
    metric: str,
    path: str | Path,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(grid)
    values = [grid[name][metric] for name in names]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(names)), values, color="#4878a8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=15)
    ax.set_ylabel(metric)
    ax.set_title("Evidence-source ablation")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_score_distribution(
    scores: Sequence[float],
    metric: str,
    path: str | Path,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(scores, bins=min(20, max(5, len(scores) // 2 or 5)),
            color="#7a9e7e", edgecolor="white")
    ax.set_xlabel(metric)
    ax.set_ylabel("items")
    ax.set_title(f"Per-item {metric}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
