"""Figure rendering for the CLI report paths (Agg backend, files only)."""

import os
import tempfile

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".png")
    os.close(fd)
    try:
        fig.savefig(tmp, dpi=150, bbox_inches="tight")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)


def chart_figure(chart, path, title=None):
    """Triangulation of a patch chart in its rectangle."""
    fig, ax = plt.subplots(figsize=(5, 5 * chart.height / chart.width))
    ax.triplot(
        chart.rect_uv[:, 0],
        chart.rect_uv[:, 1],
        chart.cut.base.faces,
        lw=0.3,
        color="tab:blue",
    )
    ax.set_xlim(0, chart.width)
    ax.set_ylim(0, chart.height)
    ax.set_aspect("equal")
    ax.set_xlabel("u")
    ax.set_ylabel("v")
    if title:
        ax.set_title(title)
    _save(fig, path)


def layout_figure(binding, comps, ks_l, path, title=None, resolution=300):
    """Filled TDF sign of one patch's components in its chart rectangle."""
    from .components import component_tdf, ks_max_rows

    W, H = binding.width, binding.height
    nx = resolution
    ny = max(2, int(resolution * H / W))
    xs = np.linspace(0, W, nx)
    ys = np.linspace(0, H, ny)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    if comps:
        vals = np.empty((len(pts), len(comps)))
        for i, c in enumerate(comps):
            vals[:, i] = component_tdf(pts, c)
        phi, _ = ks_max_rows(vals, ks_l, axis=1)
    else:
        phi = np.full(len(pts), -1.0)
    fig, ax = plt.subplots(figsize=(5, 5 * H / W))
    top = max(float(phi.max()), 0.0) + 1.0
    ax.contourf(X, Y, phi.reshape(ny, nx), levels=[0, top], colors=["0.3"])
    ax.contour(X, Y, phi.reshape(ny, nx), levels=[0.0], colors="k", linewidths=0.8)
    ax.set_xlim(0, W)
    ax.set_ylim(0, H)
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    _save(fig, path)


def history_figure(history_csv_rows, path):
    """Compliance and volume fraction against iteration, twin axes."""
    iters, C, V = [], [], []
    for row in history_csv_rows:
        parts = row.split(",")
        iters.append(int(parts[0]))
        C.append(float(parts[1]))
        V.append(float(parts[2]))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(iters, C, color="tab:red", label="compliance")
    ax.set_xlabel("iteration")
    ax.set_ylabel("compliance", color="tab:red")
    ax2 = ax.twinx()
    ax2.plot(iters, V, color="tab:blue", label="volume fraction")
    ax2.set_ylabel("volume fraction", color="tab:blue")
    fig.tight_layout()
    _save(fig, path)
