"""Figure-style plots from simulator outputs: slices, line cuts, time series.

All functions are read-only with respect to their inputs and deterministic:
re-running a job overwrites the image with identical content. The colormap
is fixed (viridis) so images stay comparable across runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .vtkread import GridData, read_vtk

CMAP = "viridis"
AXES = {"x": 0, "y": 1, "z": 2}


class PlotError(ValueError):
    pass


@dataclass
class PlotJob:
    """One post-processing request.

    kind "slice" uses (plane_axis, plane_coord) and one field; "line" uses
    (line_start, line_end, samples) and any number of fields; "timeseries"
    reads the diagnostics CSV and plots the selected columns against t.
    """

    input_path: str
    output_path: str
    kind: str  # "slice" | "line" | "timeseries"
    fields: list[str] = field(default_factory=list)
    plane_axis: str = "z"
    plane_coord: float = 1.0
    line_start: tuple[float, float, float] = (0.0, 0.0, 1.0)
    line_end: tuple[float, float, float] = (2.0, 2.0, 1.0)
    samples: int = 200


def _load_grid(path) -> GridData:
    data = read_vtk(path)
    if not isinstance(data, GridData):
        raise PlotError(f"{path}: expected a tissue (STRUCTURED_POINTS) file")
    return data


def plot_slice(job: PlotJob):
    """Heatmap of one field on an axis-aligned plane (nearest cell layer).

    Returns (output_path, 2D layer array).
    """
    data = _load_grid(job.input_path)
    if len(job.fields) != 1:
        raise PlotError("slice plots take exactly one field")
    name = job.fields[0]
    if name not in data.fields:
        raise PlotError(f"field {name!r} not in {job.input_path}")
    axis = AXES.get(job.plane_axis)
    if axis is None:
        raise PlotError(f"unknown axis {job.plane_axis!r}")
    centers = data.cell_centers_1d(axis)
    lo = data.origin[axis]
    hi = data.origin[axis] + data.shape[axis] * data.spacing[axis]
    if not lo <= job.plane_coord <= hi:
        raise PlotError(f"plane {job.plane_axis}={job.plane_coord} outside the domain")
    layer_idx = int(np.abs(centers - job.plane_coord).argmin())
    layer = np.take(data.fields[name], layer_idx, axis=axis)
    a1, a2 = [i for i in range(3) if i != axis]
    extent = [
        data.origin[a1],
        data.origin[a1] + data.shape[a1] * data.spacing[a1],
        data.origin[a2],
        data.origin[a2] + data.shape[a2] * data.spacing[a2],
    ]
    vmin, vmax = float(layer.min()), float(layer.max())
    if vmin == vmax:  # constant field: give the colorbar a usable range
        vmin, vmax = vmin - 0.5, vmax + 0.5
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    im = ax.imshow(
        layer.T, origin="lower", extent=extent, cmap=CMAP, vmin=vmin, vmax=vmax
    )
    fig.colorbar(im, ax=ax, label=name)
    names = "xyz"
    ax.set_xlabel(names[a1])
    ax.set_ylabel(names[a2])
    ax.set_title(f"{name} at {job.plane_axis} = {centers[layer_idx]:.3g}")
    fig.tight_layout()
    fig.savefig(job.output_path, dpi=130)
    plt.close(fig)
    return job.output_path, layer


def plot_line(job: PlotJob):
    """Field profiles along a straight segment (trilinear sampling).

    Returns (output_path, {field: sampled values}, arclength array).
    """
    data = _load_grid(job.input_path)
    if not job.fields:
        raise PlotError("line plots need at least one field")
    start = np.asarray(job.line_start, dtype=float)
    end = np.asarray(job.line_end, dtype=float)
    lo = data.origin
    hi = data.origin + np.array(data.shape) * data.spacing
    for pt in (start, end):
        if np.any(pt < lo - 1e-12) or np.any(pt > hi + 1e-12):
            raise PlotError(f"line endpoint {pt} outside the domain")
    t = np.linspace(0.0, 1.0, job.samples)
    pts = start + t[:, None] * (end - start)
    arclength = t * float(np.linalg.norm(end - start))
    curves = {}
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name in job.fields:
        if name not in data.fields:
            raise PlotError(f"field {name!r} not in {job.input_path}")
        curves[name] = data.sample_trilinear(name, pts)
        ax.plot(arclength, curves[name], label=name)
    ax.set_xlabel("arclength")
    ax.set_ylabel("volume fraction")
    ax.legend()
    ax.set_title(f"profiles {tuple(np.round(start, 3))} to {tuple(np.round(end, 3))}")
    fig.tight_layout()
    fig.savefig(job.output_path, dpi=130)
    plt.close(fig)
    return job.output_path, curves, arclength


def read_diagnostics_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise PlotError(f"{path}: empty CSV")
    header = rows[0]
    data = {name: [] for name in header}
    for row in rows[1:]:
        for name, val in zip(header, row):
            data[name].append(float(val))
    return {name: np.asarray(vals) for name, vals in data.items()}


def plot_timeseries(job: PlotJob):
    """One panel per selected diagnostics column, against time.

    Returns (output_path, {column: values}, time array).
    """
    data = read_diagnostics_csv(job.input_path)
    if "t" not in data:
        raise PlotError(f"{job.input_path}: no 't' column")
    columns = job.fields or [c for c in data if c != "t"]
    missing = [c for c in columns if c not in data]
    if missing:
        raise PlotError(f"missing column(s): {', '.join(missing)}")
    t = data["t"]
    n = len(columns)
    fig, axes = plt.subplots(n, 1, figsize=(6.0, 1.1 + 1.7 * n), sharex=True, squeeze=False)
    marker = "o" if len(t) == 1 else None
    for ax, name in zip(axes[:, 0], columns):
        ax.plot(t, data[name], marker=marker)
        ax.set_ylabel(name)
    axes[-1, 0].set_xlabel("t")
    fig.tight_layout()
    fig.savefig(job.output_path, dpi=130)
    plt.close(fig)
    return job.output_path, {c: data[c] for c in columns}, t
