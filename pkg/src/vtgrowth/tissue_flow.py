"""Tissue Darcy flow: pressure assembly, Korteweg forcing, face velocities.

The pressure satisfies -div(K grad p) = (surface sources) - div(K S_p) with
a two-point flux approximation on the uniform mesh. S_p is the capillary
(Korteweg-type) momentum source built from the chemical-potential and taxis
gradients of the two mobile tumor phases, evaluated on faces. Boundary
conditions are zero-flux except on an optional Dirichlet patch; when the
transvascular leakage is active, its mass-lumped diagonal renders the
all-Neumann operator invertible (see engine.coupled_flow_solve).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import grid as gridmod
from .grid import CellField, FaceField, Grid3D, build_laplacian
from .linalg import CsrMatrix
from .species import Parameters, TissueState, cutoff

# boundary side identifiers: (axis, end) with end 0 = low face, 1 = high face
ALL_SIDES = tuple((axis, end) for axis in range(3) for end in (0, 1))


@dataclass
class FlowBC:
    """Pressure boundary conditions: Dirichlet on the listed sides (value a
    constant or a callable of the face-center position), zero-flux elsewhere.
    An empty side list is the all-Neumann configuration."""

    dirichlet_sides: tuple = ()
    value: float | Callable = 0.0

    def values_on_side(self, grid: Grid3D, axis: int, end: int) -> np.ndarray:
        """Dirichlet values at the face centers of one side, shape (n, n)."""
        if not callable(self.value):
            return np.full((grid.n, grid.n), float(self.value))
        c1 = grid.cell_centers_1d((axis + 1) % 3)
        c2 = grid.cell_centers_1d((axis + 2) % 3)
        a, b = np.meshgrid(c1, c2, indexing="ij")
        coord = grid.origin[axis] + (0.0 if end == 0 else grid.extent)
        xyz = [None, None, None]
        xyz[axis] = np.full_like(a, coord)
        xyz[(axis + 1) % 3] = a
        xyz[(axis + 2) % 3] = b
        return self.value(xyz[0], xyz[1], xyz[2])


def all_dirichlet(value) -> FlowBC:
    return FlowBC(dirichlet_sides=ALL_SIDES, value=value)


@dataclass
class KortewegSource:
    """Capillary momentum source, one normal component per face."""

    faces: FaceField


def _side_layer(arr: np.ndarray, axis: int, end: int) -> np.ndarray:
    sl = [slice(None)] * 3
    sl[axis] = 0 if end == 0 else -1
    return arr[tuple(sl)]


def korteweg_source(state: TissueState, p: Parameters) -> KortewegSource:
    """Face-centered S_p built from the mobile tumor phases.

    Per interior face and phase: -C(phi)_face times the across-face
    difference quotient of (mu + chi_c nutrient + chi_h ecm), where
    C(phi)_face is the arithmetic mean of the clamped cell values.
    Boundary faces carry zero.
    """
    g = state.grid
    out = FaceField.zeros(g)
    taxis = p.chemotaxis * state.nutrient.values + p.haptotaxis * state.ecm.values
    for phi, mu in ((state.prolific, state.mu_prolific), (state.hypoxic, state.mu_hypoxic)):
        c = cutoff(phi.values)
        drive = mu.values + taxis
        for axis, comp in enumerate(out.components()):
            inner = [slice(None)] * 3
            inner[axis] = slice(1, -1)
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[axis] = slice(0, -1)
            hi[axis] = slice(1, None)
            c_face = 0.5 * (c[tuple(lo)] + c[tuple(hi)])
            comp[tuple(inner)] += -c_face * np.diff(drive, axis=axis) / g.h
    return KortewegSource(out)


def korteweg_rhs(S_p: KortewegSource, permeability: float) -> np.ndarray:
    """Per-volume source -div(K S_p) as the FV divergence of face values."""
    g = S_p.faces.grid
    out = np.zeros((g.n,) * 3)
    for axis, comp in enumerate(S_p.faces.components()):
        out -= np.diff(comp, axis=axis)
    return permeability * out.reshape(-1) / g.h


def assemble_tissue_pressure(
    grid: Grid3D,
    permeability: float,
    surface_source: CellField | None,
    S_p: KortewegSource | None,
    bc: FlowBC,
) -> tuple[CsrMatrix, np.ndarray]:
    """TPFA system for -div(K grad p) = sources - div(K S_p), per volume.

    Dirichlet sides enter by ghost elimination (2K/h^2 diagonal, 2K g/h^2
    right-hand side); all other boundary faces are zero-flux. The matrix is
    symmetric and weakly diagonally dominant.
    """
    if permeability <= 0:
        raise ValueError("permeability must be positive")
    n = grid.n
    inv_h2 = 1.0 / grid.h**2
    mat = permeability * build_laplacian(grid, gridmod.NEUMANN).to_scipy()
    rhs = np.zeros(n**3)
    if surface_source is not None:
        rhs += surface_source.flat()
    if S_p is not None:
        rhs += korteweg_rhs(S_p, permeability)
    if bc.dirichlet_sides:
        extra = np.zeros((n,) * 3)
        gval = np.zeros((n,) * 3)
        for axis, end in bc.dirichlet_sides:
            vals = bc.values_on_side(grid, axis, end)
            _side_layer(extra, axis, end)[...] += 2.0 * permeability * inv_h2
            _side_layer(gval, axis, end)[...] += 2.0 * permeability * inv_h2 * vals
        mat = mat + sp.diags(extra.reshape(-1))
        rhs += gval.reshape(-1)
    mat = mat.tocsr()
    mat.sort_indices()
    return CsrMatrix.from_scipy(mat), rhs


def face_velocity(
    p: CellField,
    S_p: KortewegSource | None,
    permeability: float,
    bc: FlowBC | None = None,
) -> FaceField:
    """Darcy velocity per face: v = -K (dp/dn - S_p).

    Zero-flux boundary faces get exactly zero; Dirichlet faces use the
    ghost-eliminated one-sided gradient, consistent with the assembly.
    """
    g = p.grid
    out = FaceField.zeros(g)
    for axis, comp in enumerate(out.components()):
        inner = [slice(None)] * 3
        inner[axis] = slice(1, -1)
        comp[tuple(inner)] = -permeability * np.diff(p.values, axis=axis) / g.h
    if S_p is not None:
        for axis, (vcomp, scomp) in enumerate(zip(out.components(), S_p.faces.components())):
            inner = [slice(None)] * 3
            inner[axis] = slice(1, -1)
            vcomp[tuple(inner)] += permeability * scomp[tuple(inner)]
    if bc is not None:
        for axis, end in bc.dirichlet_sides:
            vals = bc.values_on_side(g, axis, end)
            cells = _side_layer(p.values, axis, end)
            facecomp = out.components()[axis]
            sl = [slice(None)] * 3
            sl[axis] = 0 if end == 0 else -1
            if end == 0:
                facecomp[tuple(sl)] = -permeability * 2.0 * (cells - vals) / g.h
            else:
                facecomp[tuple(sl)] = -permeability * 2.0 * (vals - cells) / g.h
    return out
