"""Uniform cubic mesh over a cube, cell/face fields, and discrete stencils.

All 3D fields are cell-centered on an n x n x n mesh with edge length h.
Face fields store one normal component per axis-aligned face, including
boundary faces: the x-face array has shape (n+1, n, n) and so on. The
discrete operators are the standard two-point flux approximation family:
7-point Laplacian, face-difference gradient and its adjoint divergence,
first-order upwinding for convection.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .linalg import CsrMatrix

NEUMANN = "neumann"
DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class Grid3D:
    """Uniform cubic mesh with n cells per axis and cell edge length h."""

    n: int
    h: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least 2 cells per axis")
        if self.h <= 0:
            raise ValueError("cell edge length must be positive")

    @classmethod
    def cube(cls, n: int, length: float, origin=(0.0, 0.0, 0.0)) -> "Grid3D":
        return cls(n=n, h=length / n, origin=tuple(origin))

    @property
    def n_cells(self) -> int:
        return self.n**3

    @property
    def extent(self) -> float:
        return self.n * self.h

    @property
    def cell_volume(self) -> float:
        return self.h**3

    def cell_centers_1d(self, axis: int = 0) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.n) + 0.5) * self.h

    def cell_center_mesh(self):
        """Meshgrid (X, Y, Z) of cell-center coordinates, ij indexing."""
        return np.meshgrid(
            self.cell_centers_1d(0),
            self.cell_centers_1d(1),
            self.cell_centers_1d(2),
            indexing="ij",
        )

    def cell_center(self, i: int, j: int, k: int) -> np.ndarray:
        return np.array(self.origin) + (np.array([i, j, k]) + 0.5) * self.h

    def flat_index(self, i, j, k):
        return (np.asarray(i) * self.n + np.asarray(j)) * self.n + np.asarray(k)


@dataclass
class CellField:
    """Cell-centered scalar field; values has shape (n, n, n)."""

    grid: Grid3D
    values: np.ndarray

    @classmethod
    def zeros(cls, grid: Grid3D) -> "CellField":
        return cls(grid, np.zeros((grid.n,) * 3))

    @classmethod
    def full(cls, grid: Grid3D, value: float) -> "CellField":
        return cls(grid, np.full((grid.n,) * 3, float(value)))

    def copy(self) -> "CellField":
        return CellField(self.grid, self.values.copy())

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def total(self) -> float:
        """Integral of the field: sum of values times cell volume."""
        return float(self.values.sum()) * self.grid.cell_volume


@dataclass
class FaceField:
    """One normal component per axis-aligned face (boundary faces included)."""

    grid: Grid3D
    x: np.ndarray  # (n+1, n, n)
    y: np.ndarray  # (n, n+1, n)
    z: np.ndarray  # (n, n, n+1)

    @classmethod
    def zeros(cls, grid: Grid3D) -> "FaceField":
        n = grid.n
        return cls(
            grid,
            np.zeros((n + 1, n, n)),
            np.zeros((n, n + 1, n)),
            np.zeros((n, n, n + 1)),
        )

    def copy(self) -> "FaceField":
        return FaceField(self.grid, self.x.copy(), self.y.copy(), self.z.copy())

    def components(self):
        return (self.x, self.y, self.z)

    def max_abs(self) -> float:
        return max(
            float(np.abs(self.x).max()),
            float(np.abs(self.y).max()),
            float(np.abs(self.z).max()),
        )


@dataclass
class StencilRow:
    """One row of a discrete diffusion operator: -Laplacian scaled by 1/h^2."""

    diag: float
    neighbors: list[tuple[tuple[int, int, int], float]]
    rhs: float = 0.0


def laplacian_row(grid: Grid3D, cell, bc: str = NEUMANN, bc_value: float = 0.0) -> StencilRow:
    """Row of the 7-point operator for -Laplacian at one cell.

    Interior faces contribute 1/h^2 to the diagonal and -1/h^2 to the
    neighbor. Neumann boundary faces drop both (zero-flux mirror);
    Dirichlet faces use ghost elimination: 2/h^2 on the diagonal and
    2*g/h^2 on the right-hand side.
    """
    i, j, k = cell
    n = grid.n
    if not (0 <= i < n and 0 <= j < n and 0 <= k < n):
        raise IndexError(f"cell {cell} out of range for n={n}")
    inv_h2 = 1.0 / grid.h**2
    diag = 0.0
    rhs = 0.0
    neighbors = []
    for axis in range(3):
        for step in (-1, 1):
            nb = [i, j, k]
            nb[axis] += step
            if 0 <= nb[axis] < n:
                diag += inv_h2
                neighbors.append((tuple(nb), -inv_h2))
            elif bc == DIRICHLET:
                diag += 2.0 * inv_h2
                rhs += 2.0 * bc_value * inv_h2
            # Neumann: zero-flux face, no contribution
    return StencilRow(diag, neighbors, rhs)


@lru_cache(maxsize=8)
def build_laplacian(grid: Grid3D, bc: str = NEUMANN) -> CsrMatrix:
    """Assemble the -Laplacian (7-point, 1/h^2 scaling) for a uniform BC.

    With Neumann BC the matrix is singular on constants; with Dirichlet BC
    the ghost-eliminated operator is SPD. Dirichlet boundary values enter
    the right-hand side separately (see tissue_flow for patch BCs). The
    result is cached per grid and must be treated as read-only.
    """
    n = grid.n
    inv_h2 = 1.0 / grid.h**2
    one = np.ones(n)
    main = 2.0 * one
    if bc == NEUMANN:
        main[0] = main[-1] = 1.0
    elif bc == DIRICHLET:
        main[0] = main[-1] = 3.0
    else:
        raise ValueError(f"unknown bc {bc!r}")
    l1 = sp.diags([-one[1:], main, -one[1:]], [-1, 0, 1], format="csr")
    eye = sp.identity(n, format="csr")
    l3 = (
        sp.kron(sp.kron(l1, eye), eye)
        + sp.kron(sp.kron(eye, l1), eye)
        + sp.kron(sp.kron(eye, eye), l1)
    ) * inv_h2
    return CsrMatrix.from_scipy(l3)


def apply_neumann_laplacian(values: np.ndarray, h: float) -> np.ndarray:
    """Matrix-free Laplacian (the PDE sign: Delta phi) with zero-flux BC."""
    out = np.zeros_like(values)
    for axis in range(3):
        d = np.diff(values, axis=axis)  # interior face differences
        pad = [(0, 0)] * 3
        pad[axis] = (1, 1)
        d = np.pad(d, pad)  # zero-flux boundary faces
        out += np.diff(d, axis=axis)
    return out / h**2


def sample_trilinear(f: CellField, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of cell-centered values at arbitrary points.

    Points outside the domain (or in the outer half-cell layer) are clamped
    to the boundary cell layer. Accepts a single point or an (m, 3) array.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    g = f.grid
    u = (pts - np.asarray(g.origin)) / g.h - 0.5
    u = np.clip(u, 0.0, g.n - 1.0)
    i0 = np.minimum(u.astype(int), g.n - 2)
    w = u - i0
    v = f.values
    ix, iy, iz = i0[:, 0], i0[:, 1], i0[:, 2]
    wx, wy, wz = w[:, 0], w[:, 1], w[:, 2]
    out = np.zeros(len(pts))
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                cw = (
                    (wx if dx else 1.0 - wx)
                    * (wy if dy else 1.0 - wy)
                    * (wz if dz else 1.0 - wz)
                )
                out += cw * v[ix + dx, iy + dy, iz + dz]
    if np.ndim(points) == 1:
        return out[0]
    return out


def trilinear_cells(grid: Grid3D, points: np.ndarray):
    """Containing cell index per point, as (m, 3) int array, with clamping."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    idx = np.floor((pts - np.asarray(grid.origin)) / grid.h).astype(int)
    return np.clip(idx, 0, grid.n - 1)


def upwind_face_value(phi: CellField, v: FaceField, face) -> float:
    """Value of phi on the upwind side of one interior face.

    ``face`` is (axis, i, j, k) in the face-array indexing of FaceField;
    zero face velocity takes the arithmetic mean of the two cell values.
    """
    axis, i, j, k = face
    vel = v.components()[axis][i, j, k]
    lo = [i, j, k]
    lo[axis] -= 1
    left = phi.values[tuple(lo)]
    right = phi.values[i, j, k]
    if vel > 0.0:
        return float(left)
    if vel < 0.0:
        return float(right)
    return 0.5 * float(left + right)


def upwind_divergence(phi_vals: np.ndarray, v: FaceField) -> np.ndarray:
    """div(phi v) per cell with first-order upwind face values.

    Boundary faces use the velocity stored in the face field (zero for the
    no-flux configurations used here) with the adjacent cell value.
    """
    g = v.grid
    out = np.zeros_like(phi_vals)
    for axis, vel in enumerate(v.components()):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        inner = [slice(None)] * 3
        inner[axis] = slice(1, -1)
        vin = vel[tuple(inner)]
        left = phi_vals[tuple(lo)]
        right = phi_vals[tuple(hi)]
        face_phi = np.where(vin > 0.0, left, np.where(vin < 0.0, right, 0.5 * (left + right)))
        flux_in = np.zeros_like(vel)
        flux_in[tuple(inner)] = vin * face_phi
        first = [slice(None)] * 3
        first[axis] = slice(0, 1)
        last = [slice(None)] * 3
        last[axis] = slice(-1, None)
        flux_in[tuple(first)] = vel[tuple(first)] * phi_vals[tuple(first)]
        flux_in[tuple(last)] = vel[tuple(last)] * phi_vals[tuple(last)]
        out += np.diff(flux_in, axis=axis)
    return out / g.h


def face_gradient(f: CellField) -> FaceField:
    """Normal derivative per face; boundary faces get zero (Neumann)."""
    g = f.grid
    out = FaceField.zeros(g)
    for axis, comp in enumerate(out.components()):
        inner = [slice(None)] * 3
        inner[axis] = slice(1, -1)
        comp[tuple(inner)] = np.diff(f.values, axis=axis) / g.h
    return out


def divergence(v: FaceField) -> CellField:
    """Discrete divergence per cell (per unit volume)."""
    g = v.grid
    out = np.zeros((g.n,) * 3)
    for axis, comp in enumerate(v.components()):
        out += np.diff(comp, axis=axis)
    return CellField(g, out / g.h)


def boundary_flux_total(v: FaceField) -> float:
    """Net outward flux through the domain boundary, integrated over faces."""
    g = v.grid
    area = g.h**2
    total = 0.0
    for axis, comp in enumerate(v.components()):
        first = [slice(None)] * 3
        first[axis] = 0
        last = [slice(None)] * 3
        last[axis] = -1
        total += float(comp[tuple(last)].sum() - comp[tuple(first)].sum()) * area
    return total
