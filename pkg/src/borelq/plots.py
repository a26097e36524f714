"""SVG line plots for evolve runs (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dynamics import EvolutionResult, density  # noqa: E402
from .geometry import Grid  # noqa: E402

# Fixed id salt and no timestamp metadata keep the SVG output reproducible.
plt.rcParams["svg.hashsalt"] = "borelq"
_META = {"Date": None}


def plot_density(path: str | Path, grid: Grid, result: EvolutionResult) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    if grid.ndim == 1:
        x = grid.axes[0]
        picks = np.unique(np.linspace(0, len(result.snapshots) - 1, min(5, len(result.snapshots))).astype(int))
        for i in picks:
            ax.plot(x, density(result.snapshots[i]), label=f"t={result.times[i]:.3g}")
        ax.set_xlabel("x")
        ax.set_ylabel("rho")
        ax.legend(fontsize="small")
    else:
        im = ax.imshow(density(result.final).T, origin="lower", aspect="auto",
                       extent=(0, grid.extents[0], 0, grid.extents[1]))
        fig.colorbar(im, ax=ax, label="rho")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        ax.set_title(f"t={result.times[-1]:.3g}")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def plot_diagnostics(path: str | Path, result: EvolutionResult) -> None:
    t = [r.time for r in result.records]
    fig, ax = plt.subplots(figsize=(6, 4))
    series = {
        "|norm - norm0|": [abs(r.norm - result.records[0].norm) for r in result.records],
        "fp_residual": [r.fp_residual for r in result.records],
        "ehrenfest_max": [r.ehrenfest_max for r in result.records],
    }
    for label, ys in series.items():
        ys = np.asarray(ys, dtype=float)
        mask = ys > 0
        if np.any(mask):
            ax.semilogy(np.asarray(t)[mask], ys[mask], label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("residual")
    if ax.get_lines():
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
