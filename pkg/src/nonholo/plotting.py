"""PNG figures for CLI runs (matplotlib, Agg backend) and gnuplot scripts for the same data."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def trajectories_figure(trajs, path_nodes: np.ndarray, out: Path, title: str = "") -> Path:
    """3-D view of the path with trajectories, plus ℌ and θ̂ against time."""
    plt = _pyplot()
    fig = plt.figure(figsize=(12, 4.2))
    ax = fig.add_subplot(1, 3, 1, projection="3d")
    closed = np.vstack([path_nodes, path_nodes[:1]])
    ax.plot(*closed.T, color="black", lw=1.5, label="path")
    for i, t in enumerate(trajs):
        ax.plot(*t.points.T, lw=0.8, label=f"run {i}")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_zlabel("x3")
    ax.set_title(title or "trajectories")
    ah = fig.add_subplot(1, 3, 2)
    at = fig.add_subplot(1, 3, 3)
    for i, t in enumerate(trajs):
        keep = t.H > 0
        if keep.any():
            ah.semilogy(t.s[keep], t.H[keep], lw=0.9, label=f"run {i}")
        s, th, _ = t.theta_samples()
        if len(th):
            at.plot(s, th - th[0], lw=0.9)
    ah.set_xlabel("s")
    ah.set_ylabel("H")
    ah.grid(True, which="both", alpha=0.3)
    at.set_xlabel("s")
    at.set_ylabel("projected angle advance")
    at.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=110)
    plt.close(fig)
    return out


def sweep_figure(rows: Sequence[dict], out: Path) -> Path:
    plt = _pyplot()
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.6))
    sc = [r["scale"] for r in rows]
    a1.plot(sc, [r["time_to_target"] for r in rows], "o-")
    a1.set_xlabel("b scale")
    a1.set_ylabel(f"time to H < {rows[0]['target_H']:g}" if rows else "time to target")
    a2.plot(sc, [r["total_theta_advance"] for r in rows], "s-")
    a2.set_xlabel("b scale")
    a2.set_ylabel("total projected angle advance")
    for a in (a1, a2):
        a.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=110)
    plt.close(fig)
    return out


def path_figure(nodes: np.ndarray, out: Path, title: str = "") -> Path:
    plt = _pyplot()
    fig = plt.figure(figsize=(5, 4.5))
    ax = fig.add_subplot(projection="3d")
    closed = np.vstack([nodes, nodes[:1]])
    ax.plot(*closed.T, "k.-", lw=1.0, ms=2)
    ax.set_title(title or "traced path")
    fig.tight_layout()
    fig.savefig(out, dpi=110)
    plt.close(fig)
    return out


def gnuplot_script(csv_files: Sequence[str], path_csv: str | None, out: Path) -> Path:
    """Script that draws trajectory projections from the CSV outputs (columns x1, x2, x3 are 2–4)."""
    lines = ["set datafile separator ','", "set key autotitle columnhead",
             "set terminal pngcairo size 1000,800", "set output 'trajectories_gnuplot.png'",
             "set xlabel 'x1'", "set ylabel 'x2'", "set zlabel 'x3'"]
    plots = [f"'{path_csv}' using 1:2:3 with lines lw 2 lc rgb 'black' title 'path'"] if path_csv else []
    plots += [f"'{f}' using 2:3:4 with lines title '{Path(f).stem}'" for f in csv_files]
    lines.append("splot " + ", \\\n      ".join(plots) if plots else "# no data")
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out
