"""Resolution-sweep figures for verification reports.

Imported only when ``vexan verify --figures`` asks for it, so the numerical
modules never pull in matplotlib.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FIG_SIZE = (4.8, 3.2)


def _series(rows: Sequence[dict]) -> dict:
    """Group sweep rows into labelled (N, value) series.

    Rows carrying ``rho_cells`` (the pointwise estimate) get one line per
    kernel scale; everything else is a single line.
    """
    out: dict = {}
    for row in rows:
        if row.get("value") is None:
            continue
        label = f"rho = {row['rho_cells']:g} h" if "rho_cells" in row else "measured"
        out.setdefault(label, []).append((row["N"], row["value"]))
    return out


def sweep_figure(report: dict, path: str | Path) -> Path:
    """One PNG: measured constant against N, with the asserted bound if any."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    for label, pts in _series(report.get("resolutions", [])).items():
        ns, vals = zip(*pts)
        ax.plot(ns, vals, marker="o", label=label)
    bound = report.get("asserted_bound")
    if bound is not None:
        ax.axhline(bound, color="0.4", linestyle="--", linewidth=1, label="bound")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("cells per axis N")
    ax.set_ylabel("measured constant")
    verdict = "pass" if report.get("pass") else "fail"
    ax.set_title(f"{report['kind']} ({verdict})", fontsize=10)
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def write_figures(reports: Sequence[dict], directory: str | Path) -> list[Path]:
    directory = Path(directory)
    return [sweep_figure(r, directory / f"{i:02d}_{r['kind']}.png") for i, r in enumerate(reports)]
