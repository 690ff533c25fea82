"""Reader for the simulator's legacy-VTK outputs.

Understands exactly the two layouts the simulator writes: STRUCTURED_POINTS
with CELL_DATA scalars (tissue states) and POLYDATA lines with POINT_DATA /
CELL_DATA scalars (vessel networks). Cell arrays come back in [i, j, k]
indexing with i along x, matching the writer's transpose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class VtkFormatError(ValueError):
    pass


@dataclass
class GridData:
    origin: np.ndarray  # (3,)
    spacing: np.ndarray  # (3,)
    shape: tuple[int, int, int]  # cells per axis
    fields: dict[str, np.ndarray]  # each (nx, ny, nz)

    def cell_centers_1d(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.shape[axis]) + 0.5) * self.spacing[axis]

    def sample_trilinear(self, name: str, points: np.ndarray) -> np.ndarray:
        """Cell-centered trilinear interpolation with boundary clamping,
        matching the simulator's sampling convention."""
        if name not in self.fields:
            raise KeyError(f"field {name!r} not in file (have {sorted(self.fields)})")
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        v = self.fields[name]
        n = np.array(self.shape)
        u = (pts - self.origin) / self.spacing - 0.5
        u = np.clip(u, 0.0, n - 1.0)
        i0 = np.minimum(u.astype(int), n - 2)
        w = u - i0
        out = np.zeros(len(pts))
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    cw = (
                        (w[:, 0] if dx else 1 - w[:, 0])
                        * (w[:, 1] if dy else 1 - w[:, 1])
                        * (w[:, 2] if dz else 1 - w[:, 2])
                    )
                    out += cw * v[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
        return out


@dataclass
class PolyData:
    points: np.ndarray  # (n, 3)
    lines: np.ndarray  # (m, 2)
    point_fields: dict[str, np.ndarray]
    cell_fields: dict[str, np.ndarray]


def _tokens(lines):
    for ln in lines:
        ln = ln.strip()
        if ln:
            yield ln.split()


def _read_floats(tok, count):
    vals = []
    while len(vals) < count:
        vals.extend(float(v) for v in next(tok))
    if len(vals) != count:
        raise VtkFormatError("value count mismatch")
    return np.array(vals)


def read_vtk(path):
    """Parse a legacy VTK file; returns GridData or PolyData."""
    with open(path) as f:
        raw = f.readlines()
    if not raw or not raw[0].startswith("# vtk DataFile"):
        raise VtkFormatError(f"{path}: not a legacy VTK file")
    if raw[2].strip() != "ASCII":
        raise VtkFormatError(f"{path}: only ASCII files are supported")
    body = raw[3:]
    first = body[0].split()
    if first[0] != "DATASET":
        raise VtkFormatError(f"{path}: missing DATASET line")
    kind = first[1]
    tok = _tokens(body[1:])
    if kind == "STRUCTURED_POINTS":
        return _read_structured_points(tok, path)
    if kind == "POLYDATA":
        return _read_polydata(tok, path)
    raise VtkFormatError(f"{path}: unsupported dataset {kind}")


def _read_scalar_block(tok, count):
    lookup = next(tok)
    if lookup[0] != "LOOKUP_TABLE":
        raise VtkFormatError("SCALARS without LOOKUP_TABLE")
    return _read_floats(tok, count)


def _read_structured_points(tok, path):
    dims = origin = spacing = None
    n_cells = None
    fields = {}
    for parts in tok:
        key = parts[0]
        if key == "DIMENSIONS":
            dims = np.array([int(v) for v in parts[1:4]])
        elif key == "ORIGIN":
            origin = np.array([float(v) for v in parts[1:4]])
        elif key == "SPACING":
            spacing = np.array([float(v) for v in parts[1:4]])
        elif key == "CELL_DATA":
            n_cells = int(parts[1])
        elif key == "SCALARS":
            if n_cells is None or dims is None:
                raise VtkFormatError(f"{path}: SCALARS before CELL_DATA/DIMENSIONS")
            name = parts[1]
            flat = _read_scalar_block(tok, n_cells)
            shape = tuple(int(d) - 1 for d in dims)
            # file order is x-fastest; restore [i, j, k] indexing
            fields[name] = flat.reshape(shape[::-1]).transpose(2, 1, 0)
        else:
            raise VtkFormatError(f"{path}: unexpected keyword {key}")
    if dims is None or origin is None or spacing is None:
        raise VtkFormatError(f"{path}: incomplete STRUCTURED_POINTS header")
    shape = tuple(int(d) - 1 for d in dims)
    if n_cells is not None and n_cells != int(np.prod(shape)):
        raise VtkFormatError(f"{path}: CELL_DATA count does not match DIMENSIONS")
    return GridData(origin, spacing, shape, fields)


def _read_polydata(tok, path):
    points = np.zeros((0, 3))
    lines = np.zeros((0, 2), dtype=int)
    point_fields = {}
    cell_fields = {}
    section = None
    section_count = 0
    for parts in tok:
        key = parts[0]
        if key == "POINTS":
            n = int(parts[1])
            points = _read_floats(tok, 3 * n).reshape(n, 3)
        elif key == "LINES":
            n, total = int(parts[1]), int(parts[2])
            conn = []
            read = 0
            while read < total:
                row = [int(v) for v in next(tok)]
                read += len(row)
                if row[0] != 2:
                    raise VtkFormatError(f"{path}: only 2-point lines supported")
                conn.append(row[1:])
            lines = np.array(conn, dtype=int).reshape(-1, 2)
            if len(lines) != n:
                raise VtkFormatError(f"{path}: LINES count mismatch")
        elif key == "POINT_DATA":
            section, section_count = point_fields, int(parts[1])
        elif key == "CELL_DATA":
            section, section_count = cell_fields, int(parts[1])
        elif key == "SCALARS":
            if section is None:
                raise VtkFormatError(f"{path}: SCALARS outside a data section")
            section[parts[1]] = _read_scalar_block(tok, section_count)
        else:
            raise VtkFormatError(f"{path}: unexpected keyword {key}")
    return PolyData(points, lines, point_fields, cell_fields)
