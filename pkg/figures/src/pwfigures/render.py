"""Figure rendering over bundle directories.

Four figure kinds, all with axes in nanometres:

- ``joint-density``        heatmap of |psi(x, y)|^2 at one snapshot, with the
                           highlighted particle drawn as a filled blue circle
- ``channels``             the same heatmap with the detected pointer bands
                           and their weights overlaid
- ``trajectories``         the highlighted trajectory path over the final
                           density (1D bundles: position against time)
- ``histogram-vs-density`` sampled ensemble histogram over the |psi|^2
                           marginal, one panel per axis

Rendering is read-only over the bundle and deterministic: the same bundle
and spec produce byte-identical images under fixed library versions.
"""

import os
from dataclasses import dataclass

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .bundle import (BundleFormatError, Field, MissingArtifact,
                     read_channels, read_endpoints, read_trajectory,
                     resolve_snapshot)

KINDS = ("joint-density", "trajectories", "histogram-vs-density", "channels")

MARKER_COLOR = "#0000ff"  # pure blue: no colormap color comes close
MARKER_SIZE = 9.0
CMAP = "viridis"
FS = 1e15  # seconds -> femtoseconds


@dataclass(frozen=True)
class FigureSpec:
    """What to draw: bundle directory, figure kind, snapshot index, output."""

    bundle: str
    kind: str
    out: str
    snapshot: int = -1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}, pick from {KINDS}")


@dataclass(frozen=True)
class RenderInfo:
    """Where the image went and where the particle marker sits in it."""

    path: str
    width_px: int
    height_px: int
    marker_px: tuple[float, float] | None
    step: int
    t_s: float


def _marker_at(bundle: str, t_s: float) -> np.ndarray | None:
    """Trajectory position (nm) nearest in time to the plotted snapshot."""
    path = os.path.join(bundle, "trajectory.csv")
    if not os.path.exists(path):
        return None
    times, pos = read_trajectory(path)
    return pos[int(np.argmin(np.abs(times - t_s)))]


def _padded_extent(coords: np.ndarray) -> tuple[float, float]:
    # samples sit on grid points; pad half a cell so texels center on them
    d = coords[1] - coords[0]
    return coords[0] - 0.5 * d, coords[-1] + 0.5 * d


def _heatmap(ax, field: Field) -> None:
    if not field.is_2d:
        raise BundleFormatError("this figure kind needs a 2D field dump")
    x_lo, x_hi = _padded_extent(field.x_nm)
    y_lo, y_hi = _padded_extent(field.y_nm)
    ax.imshow(field.density().T, origin="lower", aspect="auto",
              extent=(x_lo, x_hi, y_lo, y_hi), cmap=CMAP,
              interpolation="nearest")
    ax.set_xlabel("x (nm)")
    ax.set_ylabel("y (nm)")


def _draw_marker(ax, point) -> None:
    ax.plot([point[0]], [point[1]], marker="o", linestyle="none",
            color=MARKER_COLOR, markersize=MARKER_SIZE, markeredgecolor="none")


def _finish(fig, ax, spec: FigureSpec, marker, step: int, t_s: float) -> RenderInfo:
    fig.canvas.draw()
    width_px = int(round(fig.get_size_inches()[0] * fig.dpi))
    height_px = int(round(fig.get_size_inches()[1] * fig.dpi))
    marker_px = None
    if marker is not None and ax is not None:
        x_disp, y_disp = ax.transData.transform((marker[0], marker[1]))
        marker_px = (float(x_disp), float(height_px - y_disp))
    parent = os.path.dirname(spec.out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    fig.savefig(spec.out, dpi=fig.dpi)
    plt.close(fig)
    return RenderInfo(spec.out, width_px, height_px, marker_px, step, t_s)


def _render_joint_density(spec: FigureSpec) -> RenderInfo:
    step, field = resolve_snapshot(spec.bundle, spec.snapshot)
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    _heatmap(ax, field)
    ax.set_title(f"{os.path.basename(os.path.normpath(spec.bundle))}, "
                 f"t = {field.t_s * FS:.3g} fs")
    marker = _marker_at(spec.bundle, field.t_s)
    if marker is not None:
        _draw_marker(ax, marker)
    return _finish(fig, ax, spec, marker, step, field.t_s)


def _render_channels(spec: FigureSpec) -> RenderInfo:
    step, field = resolve_snapshot(spec.bundle, spec.snapshot)
    channels = read_channels(spec.bundle)
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    _heatmap(ax, field)
    for ch in channels:
        ax.axhline(ch.y_lo_nm, color="white", lw=0.7, ls="--", alpha=0.8)
        ax.axhline(ch.y_hi_nm, color="white", lw=0.7, ls="--", alpha=0.8)
        ax.annotate(f"w = {ch.weight:.3f}", xy=(0.98, ch.centroid_nm),
                    xycoords=("axes fraction", "data"), fontsize=8,
                    va="center", ha="right", color="white")
    ax.set_title(f"pointer channels, t = {field.t_s * FS:.3g} fs")
    marker = _marker_at(spec.bundle, field.t_s)
    if marker is not None:
        _draw_marker(ax, marker)
    return _finish(fig, ax, spec, marker, step, field.t_s)


def _render_trajectories(spec: FigureSpec) -> RenderInfo:
    step, field = resolve_snapshot(spec.bundle, spec.snapshot)
    times, pos = read_trajectory(os.path.join(spec.bundle, "trajectory.csv"))
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    if field.is_2d:
        _heatmap(ax, field)
        ax.plot(pos[:, 0], pos[:, 1], color="#ff7f0e", lw=1.4)
        ax.plot([pos[0, 0]], [pos[0, 1]], marker="o", linestyle="none",
                markerfacecolor="none", markeredgecolor="#ff7f0e", markersize=7)
        marker = pos[-1]
    else:
        ax.plot(times * FS, pos[:, 0], color="#ff7f0e", lw=1.4)
        ax.set_xlabel("t (fs)")
        ax.set_ylabel("x (nm)")
        marker = np.array([times[-1] * FS, pos[-1, 0]])
    _draw_marker(ax, marker)
    ax.set_title("highlighted trajectory")
    return _finish(fig, ax, spec, marker, step, field.t_s)


def _render_histogram(spec: FigureSpec) -> RenderInfo:
    step, field = resolve_snapshot(spec.bundle, spec.snapshot)
    points_path = os.path.join(spec.bundle, "endpoints", f"step_{step:04d}.csv")
    if not os.path.exists(points_path):
        raise MissingArtifact(f"no sampled endpoints for step {step}: {points_path}")
    samples = read_endpoints(points_path)
    axes_n = 2 if field.is_2d else 1
    fig, axs = plt.subplots(1, axes_n, figsize=(6.4 * axes_n, 4.8), squeeze=False)
    for k in range(axes_n):
        ax = axs[0, k]
        coords, rho = field.marginal(k)
        ax.hist(samples[:, k], bins=60, density=True, color="#9e9e9e",
                edgecolor="none")
        ax.plot(coords, rho, color="#d62728", lw=1.6)
        ax.set_xlabel(("x (nm)", "y (nm)")[k])
        ax.set_ylabel("density (1/nm)")
    fig.suptitle(f"{len(samples)} samples vs density, t = {field.t_s * FS:.3g} fs")
    return _finish(fig, None, spec, None, step, field.t_s)


_RENDERERS = {
    "joint-density": _render_joint_density,
    "channels": _render_channels,
    "trajectories": _render_trajectories,
    "histogram-vs-density": _render_histogram,
}


def render(spec: FigureSpec) -> RenderInfo:
    """Draw one figure from a bundle; returns the image path and geometry."""
    return _RENDERERS[spec.kind](spec)
