"""Legacy-VTK writers for the tissue grid and the vessel network.

The tissue state goes out as STRUCTURED_POINTS with one CELL_DATA scalar
per field; the network as POLYDATA lines with nodal pressure/nutrient and
per-segment radius/flux. Files are ASCII with fixed 9-significant-digit
formatting, so outputs are diffable across runs.
"""

from __future__ import annotations

import numpy as np

from .network import DiscreteNetwork, VesselState
from .species import TissueState

_FMT = "%.8e"  # 9 significant digits


def _write_scalars(f, name: str, values: np.ndarray) -> None:
    f.write(f"SCALARS {name} double 1\n")
    f.write("LOOKUP_TABLE default\n")
    flat = np.asarray(values).ravel()
    for start in range(0, len(flat), 6):
        f.write(" ".join(_FMT % v for v in flat[start : start + 6]))
        f.write("\n")


def grid_field_order(values: np.ndarray) -> np.ndarray:
    """Reorder an [i,j,k]-indexed cell array to VTK's x-fastest layout."""
    return np.transpose(values, (2, 1, 0)).ravel()


def tissue_field_map(state: TissueState) -> dict[str, np.ndarray]:
    return {
        "phi_P": state.prolific.values,
        "phi_H": state.hypoxic.values,
        "phi_N": state.necrotic.values,
        "phi_T": state.tumor_total(),
        "phi_sigma": state.nutrient.values,
        "phi_MDE": state.mde.values,
        "phi_TAF": state.taf.values,
        "phi_ECM": state.ecm.values,
        "mu_P": state.mu_prolific.values,
        "mu_H": state.mu_hypoxic.values,
        "p": state.pressure.values,
    }


def write_vtk_grid(state: TissueState, path, fields: dict[str, np.ndarray] | None = None) -> None:
    """Write the tissue state as STRUCTURED_POINTS cell data."""
    g = state.grid
    if fields is None:
        fields = tissue_field_map(state)
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"vtgrowth tissue state t={state.time!r}\n")
        f.write("ASCII\n")
        f.write("DATASET STRUCTURED_POINTS\n")
        f.write(f"DIMENSIONS {g.n + 1} {g.n + 1} {g.n + 1}\n")
        f.write("ORIGIN " + " ".join(_FMT % o for o in g.origin) + "\n")
        f.write("SPACING " + " ".join(_FMT % v for v in (g.h,) * 3) + "\n")
        f.write(f"CELL_DATA {g.n_cells}\n")
        for name, values in fields.items():
            _write_scalars(f, name, grid_field_order(values))


def write_vtk_network(dnet: DiscreteNetwork | None, vessel: VesselState | None, path) -> None:
    """Write the (refined) network as POLYDATA lines.

    Handles an empty network (no nodes/segments) gracefully; nodal fields
    p_v/phi_v go to POINT_DATA, segment radius and flux to CELL_DATA.
    """
    n_nodes = 0 if dnet is None else dnet.n_nodes
    n_segs = 0 if dnet is None else dnet.n_segments
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write("vtgrowth vessel network\n")
        f.write("ASCII\n")
        f.write("DATASET POLYDATA\n")
        f.write(f"POINTS {n_nodes} double\n")
        for i in range(n_nodes):
            f.write(" ".join(_FMT % v for v in dnet.nodes[i]) + "\n")
        f.write(f"LINES {n_segs} {3 * n_segs}\n")
        for i in range(n_segs):
            a, b = dnet.segments[i]
            f.write(f"2 {a} {b}\n")
        if vessel is not None and n_nodes:
            f.write(f"POINT_DATA {n_nodes}\n")
            _write_scalars(f, "p_v", vessel.p_v)
            _write_scalars(f, "phi_v", vessel.phi_v)
        if n_segs:
            f.write(f"CELL_DATA {n_segs}\n")
            _write_scalars(f, "radius", dnet.seg_radius)
            if vessel is not None:
                _write_scalars(f, "v_v", vessel.v_v)
