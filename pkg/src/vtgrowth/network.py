"""1D vascular network: graph storage, Poiseuille flow, nutrient transport.

The network is a graph of straight segments with per-segment radius. Flow
follows the vascular-graph-model discretization: pressure unknowns at nodes,
two-point fluxes with Poiseuille conductance pi R^4 / (8 mu) per segment,
Kirchhoff balance at junctions, and a mass-lumped wall-leakage term. The 1D
nutrient is advanced node-wise with implicit diffusion and explicit upwind
convection by the signed volumetric segment flux.

For the coupled solves, each input edge is subdivided into sub-segments of
roughly the tissue mesh size (``refine``); all discrete state lives on the
refined graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .linalg import CsrMatrix, SolverConfig, solve
from .species import CFLError


class NetworkError(ValueError):
    pass


class SingularSystemError(NetworkError):
    pass


@dataclass
class BoundaryCondition:
    """Conditions at a degree-1 node: Dirichlet pressure (None = zero-flux)
    and Dirichlet nutrient value (None = free outflow)."""

    pressure: float | None = None
    nutrient: float | None = None


@dataclass
class NetworkGraph:
    """User-facing vessel graph: node positions, edges (a, b, radius),
    boundary conditions keyed by node index."""

    nodes: np.ndarray  # (N, 3)
    edges: list[tuple[int, int, float]]
    boundary: dict[int, BoundaryCondition] = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=int)
        for a, b, _ in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def edge_length(self, i: int) -> float:
        a, b, _ = self.edges[i]
        return float(np.linalg.norm(self.nodes[b] - self.nodes[a]))

    def radii(self) -> np.ndarray:
        return np.array([r for _, _, r in self.edges])


def load_network_json(path) -> NetworkGraph:
    """Read the canonical network JSON: {nodes, edges, boundary}."""
    with open(path) as f:
        doc = json.load(f)
    nodes = np.asarray(doc["nodes"], dtype=float)
    edges = [(int(a), int(b), float(r)) for a, b, r in doc["edges"]]
    boundary = {}
    for entry in doc.get("boundary", []):
        boundary[int(entry["node"])] = BoundaryCondition(
            pressure=None if entry.get("pressure") is None else float(entry["pressure"]),
            nutrient=None if entry.get("nutrient") is None else float(entry["nutrient"]),
        )
    return NetworkGraph(nodes, edges, boundary)


def save_network_json(net: NetworkGraph, path) -> None:
    doc = {
        "nodes": [list(map(float, x)) for x in net.nodes],
        "edges": [[a, b, r] for a, b, r in net.edges],
        "boundary": [
            {"node": n, "pressure": bc.pressure, "nutrient": bc.nutrient}
            for n, bc in sorted(net.boundary.items())
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)


@dataclass
class DiscreteNetwork:
    """Refined graph carrying the discrete unknowns.

    Original nodes keep their indices; subdivision nodes follow. Segments
    are the refined edges; ``parent_edge`` maps each back to the input edge.
    """

    nodes: np.ndarray  # (M, 3)
    segments: np.ndarray  # (S, 2) int node pairs, oriented along parent edge
    seg_length: np.ndarray  # (S,)
    seg_radius: np.ndarray  # (S,)
    parent_edge: np.ndarray  # (S,) int
    conductance: np.ndarray  # (S,) pi R^4 / (8 mu), the scaled permeability
    boundary: dict[int, BoundaryCondition]
    n_original: int

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def lumped_length(self) -> np.ndarray:
        """Dual-cell length per node: half of each incident segment."""
        ell = np.zeros(self.n_nodes)
        np.add.at(ell, self.segments[:, 0], 0.5 * self.seg_length)
        np.add.at(ell, self.segments[:, 1], 0.5 * self.seg_length)
        return ell

    def seg_midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[self.segments[:, 0]] + self.nodes[self.segments[:, 1]])

    def seg_tangents(self) -> np.ndarray:
        d = self.nodes[self.segments[:, 1]] - self.nodes[self.segments[:, 0]]
        return d / np.linalg.norm(d, axis=1)[:, None]

    def pressure_dirichlet(self):
        return {n: bc.pressure for n, bc in self.boundary.items() if bc.pressure is not None}

    def nutrient_dirichlet(self):
        return {n: bc.nutrient for n, bc in self.boundary.items() if bc.nutrient is not None}


@dataclass
class VesselState:
    """Nodal pressures/nutrient and signed volumetric flux per segment."""

    p_v: np.ndarray
    phi_v: np.ndarray
    v_v: np.ndarray

    @classmethod
    def zeros(cls, dnet: DiscreteNetwork) -> "VesselState":
        st = cls(np.zeros(dnet.n_nodes), np.zeros(dnet.n_nodes), np.zeros(dnet.n_segments))
        for n, val in dnet.nutrient_dirichlet().items():
            st.phi_v[n] = val
        return st

    def copy(self) -> "VesselState":
        return VesselState(self.p_v.copy(), self.phi_v.copy(), self.v_v.copy())


def poiseuille_conductance(radius, blood_viscosity: float):
    """Scaled permeability of a vessel segment: pi R^4 / (8 mu)."""
    radius = np.asarray(radius, dtype=float)
    return np.pi * radius**4 / (8.0 * blood_viscosity)


def refine(net: NetworkGraph, target_ds: float, blood_viscosity: float = 1.0) -> DiscreteNetwork:
    """Subdivide each edge into sub-segments of length close to target_ds."""
    if target_ds <= 0:
        raise ValueError("target_ds must be positive")
    nodes = [np.asarray(x, dtype=float) for x in net.nodes]
    segments, lengths, radii, parents = [], [], [], []
    for ei, (a, b, r) in enumerate(net.edges):
        if r <= 0:
            raise NetworkError(f"edge {ei}: radius must be positive")
        xa, xb = net.nodes[a], net.nodes[b]
        length = float(np.linalg.norm(xb - xa))
        if length == 0.0:
            raise NetworkError(f"edge {ei}: zero length")
        nsub = max(1, round(length / target_ds))
        prev = a
        for k in range(1, nsub + 1):
            if k == nsub:
                cur = b
            else:
                nodes.append(xa + (k / nsub) * (xb - xa))
                cur = len(nodes) - 1
            segments.append((prev, cur))
            lengths.append(length / nsub)
            radii.append(r)
            parents.append(ei)
            prev = cur
    radii = np.array(radii)
    return DiscreteNetwork(
        nodes=np.array(nodes).reshape(-1, 3),
        segments=np.array(segments, dtype=int).reshape(-1, 2),
        seg_length=np.array(lengths),
        seg_radius=radii,
        parent_edge=np.array(parents, dtype=int),
        conductance=poiseuille_conductance(radii, blood_viscosity),
        boundary=dict(net.boundary),
        n_original=net.n_nodes,
    )


def _components(n_nodes: int, segments: np.ndarray) -> np.ndarray:
    graph = sp.coo_matrix(
        (np.ones(len(segments)), (segments[:, 0], segments[:, 1])), shape=(n_nodes, n_nodes)
    )
    _, labels = csgraph.connected_components(graph, directed=False)
    return labels


def assemble_vgm_pressure(
    dnet: DiscreteNetwork,
    pbar_per_segment: np.ndarray | None,
    wall_hydraulic_permeability: float,
) -> tuple[CsrMatrix, np.ndarray]:
    """Nodal flux-balance system for the network pressure.

    Each free node balances the Poiseuille two-point fluxes of its incident
    segments against the wall leakage; the leakage of a segment,
    2 pi R L_p ds (p - pbar), is lumped half onto each end node. Dirichlet
    rows are eliminated symmetrically, so the system stays SPD.
    """
    lp = wall_hydraulic_permeability
    n = dnet.n_nodes
    dirichlet = dnet.pressure_dirichlet()
    if not dirichlet:
        raise SingularSystemError("network has no Dirichlet pressure node")
    if lp == 0.0:
        labels = _components(n, dnet.segments)
        anchored = {labels[i] for i in dirichlet}
        if set(labels) - anchored:
            raise SingularSystemError(
                "a connected component has no Dirichlet pressure node and leakage is zero"
            )
    if pbar_per_segment is None:
        pbar_per_segment = np.zeros(dnet.n_segments)
    pbar_per_segment = np.asarray(pbar_per_segment, dtype=float)
    if pbar_per_segment.shape != (dnet.n_segments,):
        raise ValueError("need one averaged tissue pressure per sub-segment")

    g = dnet.conductance / dnet.seg_length
    leak = 2.0 * np.pi * dnet.seg_radius * lp * dnet.seg_length  # full-segment leakage area x L_p
    a, b = dnet.segments[:, 0], dnet.segments[:, 1]

    diag = np.zeros(n)
    rhs = np.zeros(n)
    np.add.at(diag, a, g)
    np.add.at(diag, b, g)
    np.add.at(diag, a, 0.5 * leak)
    np.add.at(diag, b, 0.5 * leak)
    np.add.at(rhs, a, 0.5 * leak * pbar_per_segment)
    np.add.at(rhs, b, 0.5 * leak * pbar_per_segment)

    is_dir = np.zeros(n, dtype=bool)
    dir_val = np.zeros(n)
    for node, val in dirichlet.items():
        is_dir[node] = True
        dir_val[node] = val

    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [np.where(is_dir, 1.0, diag)]
    rhs = np.where(is_dir, dir_val, rhs)

    # off-diagonal segment couplings, with columns of Dirichlet nodes folded
    # into the right-hand side
    for u, v in ((a, b), (b, a)):
        keep = ~is_dir[u]
        uu, vv, gg = u[keep], v[keep], g[keep]
        free_nb = ~is_dir[vv]
        rows.append(uu[free_nb])
        cols.append(vv[free_nb])
        vals.append(-gg[free_nb])
        np.add.at(rhs, uu[~free_nb], gg[~free_nb] * dir_val[vv[~free_nb]])

    mat = CsrMatrix.from_coo(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (n, n)
    )
    return mat, rhs


def solve_vgm_pressure(
    dnet: DiscreteNetwork,
    pbar_per_segment: np.ndarray | None,
    wall_hydraulic_permeability: float,
    solver: SolverConfig | None = None,
    x0: np.ndarray | None = None,
) -> np.ndarray:
    mat, rhs = assemble_vgm_pressure(dnet, pbar_per_segment, wall_hydraulic_permeability)
    x, _ = solve(mat, rhs, solver or SolverConfig(), x0=x0)
    return x


def edge_flux(dnet: DiscreteNetwork, p_v: np.ndarray) -> np.ndarray:
    """Signed volumetric flux per segment, positive along the segment
    orientation: -conductance * dp/ds."""
    a, b = dnet.segments[:, 0], dnet.segments[:, 1]
    return -dnet.conductance * (p_v[b] - p_v[a]) / dnet.seg_length


def kirchhoff_residual(dnet: DiscreteNetwork, p_v: np.ndarray) -> np.ndarray:
    """Net flux imbalance per node (should vanish at interior nodes when
    there is no leakage)."""
    q = edge_flux(dnet, p_v)
    res = np.zeros(dnet.n_nodes)
    np.add.at(res, dnet.segments[:, 0], -q)
    np.add.at(res, dnet.segments[:, 1], q)
    return res


def advance_vessel_transport(
    dnet: DiscreteNetwork,
    state: VesselState,
    wall_flux_per_segment: np.ndarray | None,
    dt: float,
    nutrient_diffusivity: float,
    solver: SolverConfig | None = None,
) -> np.ndarray:
    """One transport step for the 1D nutrient; returns the new nodal values.

    Implicit 3-point diffusion with flux continuity at junctions, explicit
    upwind convection by the segment fluxes in ``state.v_v``, and the
    explicit exchange sink -2 pi R J per segment (positive J drains the
    vessel), mass-lumped half onto each segment end. Dirichlet inlet nodes
    are held at their boundary value; free-outflow ends carry no diffusive
    flux and advect their own value outward.
    """
    q = state.v_v
    if len(q) != dnet.n_segments:
        raise ValueError("need one flux per segment")
    cfl = dt * float(np.abs(q).max(initial=0.0)) / float(dnet.seg_length.min())
    if cfl > 1.0 + 1e-12:
        raise CFLError(f"vessel transport CFL violated: {cfl:.3f} > 1")

    n = dnet.n_nodes
    ell = dnet.lumped_length()
    a, b = dnet.segments[:, 0], dnet.segments[:, 1]
    phi = state.phi_v

    # explicit upwind convection: flux q > 0 carries phi from a to b
    up = np.where(q > 0.0, phi[a], np.where(q < 0.0, phi[b], 0.5 * (phi[a] + phi[b])))
    adv = np.zeros(n)
    np.add.at(adv, a, q * up)
    np.add.at(adv, b, -q * up)

    # boundary cross-sections at degree-1 nodes: zero-gradient outflow /
    # upstream value on inflow (Dirichlet rows are overwritten below anyway)
    deg = np.zeros(n, dtype=int)
    np.add.at(deg, a, 1)
    np.add.at(deg, b, 1)
    seg_of = {}
    for si, (u, v) in enumerate(dnet.segments):
        seg_of.setdefault(u, []).append((si, +1))
        seg_of.setdefault(v, []).append((si, -1))
    nutrient_bc = dnet.nutrient_dirichlet()
    for node in np.nonzero(deg == 1)[0]:
        si, sign = seg_of[node][0]
        q_in = sign * q[si]  # flow entering the network at this end
        if q_in > 0.0:
            carried = nutrient_bc.get(node, phi[node])
        else:
            carried = phi[node]
        adv[node] -= q_in * carried

    sink_mass = np.zeros(n)
    if wall_flux_per_segment is not None:
        j = np.asarray(wall_flux_per_segment, dtype=float)
        if j.shape != (dnet.n_segments,):
            raise ValueError("need one wall flux per segment")
        seg_loss = 2.0 * np.pi * dnet.seg_radius * dnet.seg_length * j
        np.add.at(sink_mass, a, 0.5 * seg_loss)
        np.add.at(sink_mass, b, 0.5 * seg_loss)

    d = nutrient_diffusivity / dnet.seg_length  # m_v = 1
    diag = ell / dt
    rhs = ell * phi / dt - adv - sink_mass
    is_dir = np.zeros(n, dtype=bool)
    dir_val = np.zeros(n)
    for node, val in nutrient_bc.items():
        is_dir[node] = True
        dir_val[node] = val
    dfree = np.zeros(n)
    np.add.at(dfree, a, d)
    np.add.at(dfree, b, d)
    diag = diag + dfree
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [np.where(is_dir, 1.0, diag)]
    rhs = np.where(is_dir, dir_val, rhs)
    for u, v in ((a, b), (b, a)):
        keep = ~is_dir[u]
        uu, vv, dd = u[keep], v[keep], d[keep]
        free_nb = ~is_dir[vv]
        rows.append(uu[free_nb])
        cols.append(vv[free_nb])
        vals.append(-dd[free_nb])
        np.add.at(rhs, uu[~free_nb], dd[~free_nb] * dir_val[vv[~free_nb]])
    mat = CsrMatrix.from_coo(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (n, n)
    )
    x, _ = solve(mat, rhs, solver or SolverConfig(), x0=phi.copy())
    return x


def steady_vessel_nutrient(
    dnet: DiscreteNetwork,
    v_v: np.ndarray,
    pbar_per_segment: np.ndarray,
    sigma_bar_per_segment: np.ndarray,
    p_v: np.ndarray,
    nutrient_diffusivity: float,
    wall_hydraulic_permeability: float,
    wall_nutrient_permeability: float,
    reflection: float = 0.0,
    solver: SolverConfig | None = None,
) -> np.ndarray:
    """Stationary 1D nutrient profile for the given flow and tissue state.

    Solves the steady upwind advection / diffusion / wall-exchange balance
    with the tissue-side averages frozen. Used to initialize the vessel
    nutrient so a run does not start with an unphysical fill-in transient
    (the advective fill time at the volumetric-flux transport speed would
    otherwise dominate the simulated horizon).
    """
    n = dnet.n_nodes
    a, b = dnet.segments[:, 0], dnet.segments[:, 1]
    q = np.asarray(v_v, dtype=float)
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    diag = np.zeros(n)

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    # upwind advection: flux q phi_up leaves the upwind node, enters the other
    for s in range(dnet.n_segments):
        up, down = (a[s], b[s]) if q[s] >= 0.0 else (b[s], a[s])
        flux = abs(q[s])
        diag[up] += flux
        add(down, up, -flux)
    # diffusion
    d = nutrient_diffusivity / dnet.seg_length
    for s in range(dnet.n_segments):
        diag[a[s]] += d[s]
        diag[b[s]] += d[s]
        add(a[s], b[s], -d[s])
        add(b[s], a[s], -d[s])
    # wall exchange, mass-lumped half/half with the segment mean concentration
    j_pv = wall_hydraulic_permeability * (
        0.5 * (p_v[a] + p_v[b]) - np.asarray(pbar_per_segment, dtype=float)
    )
    sig = np.asarray(sigma_bar_per_segment, dtype=float)
    area = 2.0 * np.pi * dnet.seg_radius * dnet.seg_length
    for s in range(dnet.n_segments):
        if j_pv[s] >= 0.0:
            coeff = (1.0 - reflection) * j_pv[s] + wall_nutrient_permeability
            const = -wall_nutrient_permeability * sig[s]
        else:
            coeff = wall_nutrient_permeability
            const = ((1.0 - reflection) * j_pv[s] - wall_nutrient_permeability) * sig[s]
        for node in (a[s], b[s]):
            half = 0.5 * area[s]
            diag[node] += half * 0.5 * coeff
            add(node, a[s] if node == b[s] else b[s], half * 0.5 * coeff)
            rhs[node] -= half * const
    # boundary cross-sections at degree-1 nodes
    deg = np.zeros(n, dtype=int)
    np.add.at(deg, a, 1)
    np.add.at(deg, b, 1)
    nutrient_bc = dnet.nutrient_dirichlet()
    seg_end = {}
    for s in range(dnet.n_segments):
        seg_end.setdefault(a[s], []).append((s, +1))
        seg_end.setdefault(b[s], []).append((s, -1))
    for node in np.nonzero(deg == 1)[0]:
        s, sign = seg_end[node][0]
        q_in = sign * q[s]
        if q_in > 0.0:
            rhs[node] += q_in * nutrient_bc.get(node, 0.0)
        else:
            diag[node] += -q_in  # outflow carries the node's own value
    # Dirichlet nutrient rows
    is_dir = np.zeros(n, dtype=bool)
    for node, val in nutrient_bc.items():
        is_dir[node] = True
        rhs[node] = val
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    vals = np.asarray(vals, dtype=float)
    keep = ~is_dir[rows]
    moved = keep & is_dir[cols] if len(rows) else np.zeros(0, dtype=bool)
    np.add.at(rhs, rows[moved], -vals[moved] * rhs[cols[moved]])
    keep = keep & ~is_dir[cols] if len(rows) else keep
    diag = np.where(is_dir, 1.0, diag)
    mat = CsrMatrix.from_coo(
        np.concatenate([np.arange(n), rows[keep]]),
        np.concatenate([np.arange(n), cols[keep]]),
        np.concatenate([diag, vals[keep]]),
        (n, n),
    )
    cfg = solver or SolverConfig()
    cfg = SolverConfig("bicgstab", cfg.rel_tol, cfg.abs_tol, cfg.max_iters, cfg.preconditioner)
    x, _ = solve(mat, rhs, cfg)
    return x


@dataclass
class ValidationReport:
    violations: list[str]
    radius_max: float
    radius_min: float
    radius_mean: float

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_network(net: NetworkGraph) -> ValidationReport:
    """Check structural invariants and report radius statistics."""
    violations = []
    radii = net.radii()
    if len(net.edges) == 0:
        violations.append("network has no edges")
        return ValidationReport(violations, 0.0, 0.0, 0.0)
    for i, (A, B, r) in enumerate(net.edges):
        if r <= 0:
            violations.append(f"edge {i}: non-positive radius {r}")
        if not (0 <= A < net.n_nodes and 0 <= B < net.n_nodes):
            violations.append(f"edge {i}: node index out of range")
        elif net.edge_length(i) == 0.0:
            violations.append(f"edge {i}: zero length")
    deg = net.degrees()
    for node in np.nonzero(deg == 0)[0]:
        violations.append(f"node {int(node)}: disconnected (degree 0)")
    for node in np.nonzero(deg == 1)[0]:
        if int(node) not in net.boundary:
            violations.append(f"node {int(node)}: boundary node without conditions")
    if any(bc.pressure is not None for bc in net.boundary.values()):
        labels = _components(net.n_nodes, np.array([(a, b) for a, b, _ in net.edges]))
        anchored = {labels[n] for n, bc in net.boundary.items() if bc.pressure is not None}
        for comp in set(labels) - anchored:
            members = np.nonzero(labels == comp)[0]
            if deg[members].max(initial=0) > 0:
                violations.append(
                    f"component containing node {int(members[0])} has no pressure condition"
                )
    else:
        violations.append("no Dirichlet pressure node anywhere")
    return ValidationReport(
        violations,
        float(radii.max()),
        float(radii.min()),
        float(radii.mean()),
    )
