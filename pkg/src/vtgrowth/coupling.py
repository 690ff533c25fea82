"""3D-1D exchange machinery.

Each vessel sub-segment carries a ring of quadrature points on the cylinder
surface (radius R around the segment midpoint, in the plane perpendicular to
the segment). Ring points hold equal surface weights summing to the lateral
area 2 pi R ds, sample the tissue fields trilinearly, and deposit exchange
fluxes into their containing grid cell (Dirac surface measure regularized by
the cell indicator). The same per-point fluxes, reduced per segment, feed the
mass-lumped sinks of the network nodes, so tissue gain and network loss
balance exactly by construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grid import CellField, Grid3D, sample_trilinear, trilinear_cells
from .network import DiscreteNetwork


@dataclass
class ExchangeParams:
    """Wall permeabilities: hydraulic (L_p), nutrient (L_s) and the
    reflection weight of the advective nutrient carry-over."""

    hydraulic: float
    nutrient: float
    reflection: float = 0.0

    def __post_init__(self):
        if self.hydraulic < 0 or self.nutrient < 0:
            raise ValueError("permeabilities must be non-negative")
        if not 0.0 <= self.reflection <= 1.0:
            raise ValueError("reflection must lie in [0, 1]")


@dataclass
class CouplingMap:
    """Precomputed surface quadrature linking vessel segments to grid cells."""

    grid: Grid3D
    n_theta: int
    # per segment
    seg_length: np.ndarray
    seg_radius: np.ndarray
    seg_nodes: np.ndarray  # (S, 2) end nodes, each owning half the segment
    # per quadrature point (S * n_theta, flattened segment-major)
    points: np.ndarray  # (Q, 3)
    weights: np.ndarray  # (Q,) surface weights, sum 2 pi R ds per segment
    cells: np.ndarray  # (Q, 3) containing cell index (clamped)
    cells_flat: np.ndarray  # (Q,) flattened containing cell

    @property
    def n_segments(self) -> int:
        return len(self.seg_length)

    def point_segment(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_segments), self.n_theta)

    def segment_sum(self, per_point: np.ndarray) -> np.ndarray:
        return per_point.reshape(self.n_segments, self.n_theta).sum(axis=1)

    def segment_mean(self, per_point: np.ndarray) -> np.ndarray:
        return per_point.reshape(self.n_segments, self.n_theta).mean(axis=1)

    def node_average(self, nodal: np.ndarray) -> np.ndarray:
        """Per-segment value from nodal data: mean of the two end nodes."""
        return 0.5 * (nodal[self.seg_nodes[:, 0]] + nodal[self.seg_nodes[:, 1]])


def perpendicular_frame(tangent: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal completion of a unit tangent."""
    axis = np.zeros(3)
    axis[np.argmin(np.abs(tangent))] = 1.0
    u = axis - np.dot(axis, tangent) * tangent
    u /= np.linalg.norm(u)
    w = np.cross(tangent, u)
    return u, w


def build_coupling_map(grid: Grid3D, dnet: DiscreteNetwork, n_theta: int = 8) -> CouplingMap:
    """Place the surface quadrature ring at each sub-segment midpoint.

    Rings use n_theta uniformly spaced angles; each point carries weight
    2 pi R ds / n_theta. Points outside the domain are clamped into the
    boundary cell layer. Radii under half a cell are admissible but poorly
    resolved, so a warning is emitted.
    """
    if n_theta < 4:
        raise ValueError("need at least 4 ring points")
    if float(dnet.seg_radius.min(initial=np.inf)) < 0.5 * grid.h:
        warnings.warn(
            "vessel radius below h/2: surface quadrature is under-resolved",
            RuntimeWarning,
            stacklevel=2,
        )
    mids = dnet.seg_midpoints()
    tangents = dnet.seg_tangents()
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    pts = np.empty((dnet.n_segments, n_theta, 3))
    for s in range(dnet.n_segments):
        u, w = perpendicular_frame(tangents[s])
        ring = dnet.seg_radius[s] * (np.outer(cos_t, u) + np.outer(sin_t, w))
        pts[s] = mids[s] + ring
    pts = pts.reshape(-1, 3)
    weights = np.repeat(
        2.0 * np.pi * dnet.seg_radius * dnet.seg_length / n_theta, n_theta
    )
    cells = trilinear_cells(grid, pts)
    flat = grid.flat_index(cells[:, 0], cells[:, 1], cells[:, 2])
    return CouplingMap(
        grid=grid,
        n_theta=n_theta,
        seg_length=dnet.seg_length.copy(),
        seg_radius=dnet.seg_radius.copy(),
        seg_nodes=dnet.segments.copy(),
        points=pts,
        weights=weights,
        cells=cells,
        cells_flat=np.asarray(flat),
    )


def circle_average(f: CellField, cmap: CouplingMap, segment: int | None = None):
    """Circumference average of a tissue field: plain mean of the ring
    samples. Returns one value per segment, or a float for one segment."""
    samples = sample_trilinear(f, cmap.points)
    means = cmap.segment_mean(samples)
    if segment is None:
        return means
    return float(means[segment])


def starling_flux(pbar, p_v, hydraulic_permeability: float):
    """Transmural fluid flux L_p (p_v - pbar), positive out of the vessel."""
    return hydraulic_permeability * (np.asarray(p_v, dtype=float) - pbar)


def kedem_katchalsky_flux(phibar_sigma, pbar, phi_v, p_v, params: ExchangeParams):
    """Transvascular nutrient flux: advective carry-over of the upwind
    concentration plus Fickian wall permeation.

    The carried concentration is the vessel value when p_v >= pbar (ties
    included) and the tissue-side average otherwise.
    """
    j_pv = starling_flux(pbar, p_v, params.hydraulic)
    carried = np.where(np.asarray(p_v, dtype=float) >= pbar, phi_v, phibar_sigma)
    out = (1.0 - params.reflection) * j_pv * carried + params.nutrient * (
        np.asarray(phi_v, dtype=float) - phibar_sigma
    )
    if out.ndim == 0:
        return float(out)
    return out


def accumulate_surface_sources(
    cmap: CouplingMap, flux_per_point: np.ndarray
) -> tuple[CellField, np.ndarray]:
    """Turn per-point surface fluxes into a per-volume tissue source and a
    per-length nodal network sink.

    Each point deposits weight * J / h^3 into its containing cell. The same
    weighted fluxes, summed per segment, are split half/half onto the two
    end nodes and divided by the nodal lumped length. The nodal values are
    signed rates of change for the 1D equation (negative where the vessel
    loses mass), so the total tissue gain and the total network change sum
    to zero by construction.
    """
    flux_per_point = np.asarray(flux_per_point, dtype=float)
    if flux_per_point.shape != cmap.weights.shape:
        raise ValueError("need one flux value per quadrature point")
    g = cmap.grid
    source = np.zeros(g.n_cells)
    np.add.at(source, cmap.cells_flat, cmap.weights * flux_per_point / g.cell_volume)
    seg_total = cmap.segment_sum(cmap.weights * flux_per_point)  # 2 pi R ds Jbar
    n_nodes = int(cmap.seg_nodes.max()) + 1 if len(cmap.seg_nodes) else 0
    lumped = np.zeros(n_nodes)
    np.add.at(lumped, cmap.seg_nodes[:, 0], 0.5 * cmap.seg_length)
    np.add.at(lumped, cmap.seg_nodes[:, 1], 0.5 * cmap.seg_length)
    node_mass_rate = np.zeros(n_nodes)
    np.add.at(node_mass_rate, cmap.seg_nodes[:, 0], -0.5 * seg_total)
    np.add.at(node_mass_rate, cmap.seg_nodes[:, 1], -0.5 * seg_total)
    rate = np.divide(
        node_mass_rate, lumped, out=np.zeros_like(node_mass_rate), where=lumped > 0
    )
    return CellField(g, source.reshape((g.n,) * 3)), rate


def wall_flux_per_segment(cmap: CouplingMap, flux_per_point: np.ndarray) -> np.ndarray:
    """Reduce per-point fluxes to the per-segment mean, the J that enters
    the 1D sink term -2 pi R J."""
    return cmap.segment_mean(np.asarray(flux_per_point, dtype=float))
