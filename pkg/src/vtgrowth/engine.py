"""Time-loop orchestration of the coupled 3D-1D system.

Each step runs, in order: (1) the fixed-point-coupled pressure pair
(tissue Darcy + network flow) and the velocity reconstructions; (2) the
transvascular exchange evaluation on the vessel surface quadrature; (3) the
two Cahn-Hilliard phases; (4) the local necrotic/ECM updates; (5) the
reaction-diffusion trio with the nutrient exchange; (6) the 1D nutrient
transport with the matching wall sink; (7) the chemical-potential refresh
and diagnostics. Species sub-steps use the time-n couplings; optionally the
whole block is Picard-iterated (``fixed_point_scope = "all"``).

The wall exchange splits into an explicit part (vessel-side values and
advective carry-over) and a mass-lumped implicit diagonal for the part
proportional to the local tissue nutrient; the fluxes actually realized by
the implicit solve are the ones sent to the vessel sink, so the exchanged
mass balances exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import species as spc
from .coupling import CouplingMap, circle_average
from .grid import CellField, FaceField, Grid3D, face_gradient, sample_trilinear
from .linalg import CsrMatrix, SolverConfig, solve
from .network import DiscreteNetwork, VesselState, advance_vessel_transport, edge_flux, solve_vgm_pressure
from .species import Parameters, TissueState, chemical_potential, potential_and_derivatives
from .tissue_flow import FlowBC, KortewegSource, assemble_tissue_pressure, face_velocity, korteweg_source


class EngineError(RuntimeError):
    pass


class FixedPointError(EngineError):
    def __init__(self, iterations, change):
        self.iterations = iterations
        self.change = change
        super().__init__(
            f"flow fixed point did not converge in {iterations} iterations "
            f"(last change {change:.3e})"
        )


@dataclass
class TimeLoopConfig:
    dt: float = 0.025
    t_end: float = 5.0
    fixed_point_tol: float = 1e-8
    fixed_point_max_iters: int = 50
    fixed_point_scope: str = "flow"  # "flow" or "all"
    output_every: int = 20

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if self.fixed_point_tol <= 0:
            raise ValueError("fixed_point_tol must be positive")
        if self.fixed_point_scope not in ("flow", "all"):
            raise ValueError("fixed_point_scope must be 'flow' or 'all'")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


DIAGNOSTIC_COLUMNS = (
    "t", "E", "mass_P", "mass_H", "mass_N", "mass_sigma", "mass_MDE",
    "mass_TAF", "mass_ECM", "mass_phi_v", "p_min", "p_max", "pv_min",
    "pv_max", "fp_iters",
)


@dataclass
class Diagnostics:
    """One row of scalar diagnostics per time level."""

    t: float
    energy: float
    masses: dict[str, float]
    phi_extrema: dict[str, tuple[float, float]]
    network_nutrient_mass: float
    pressure_extrema: tuple[float, float]
    vessel_pressure_extrema: tuple[float, float]
    fixed_point_iterations: int

    def row(self) -> list[float]:
        return [
            self.t,
            self.energy,
            self.masses["prolific"],
            self.masses["hypoxic"],
            self.masses["necrotic"],
            self.masses["nutrient"],
            self.masses["mde"],
            self.masses["taf"],
            self.masses["ecm"],
            self.network_nutrient_mass,
            self.pressure_extrema[0],
            self.pressure_extrema[1],
            self.vessel_pressure_extrema[0],
            self.vessel_pressure_extrema[1],
            self.fixed_point_iterations,
        ]

    def all_finite(self) -> bool:
        vals = self.row() + [v for pair in self.phi_extrema.values() for v in pair]
        return all(math.isfinite(float(v)) for v in vals)


def compute_energy(state: TissueState, p: Parameters) -> float:
    """Discrete free energy: midpoint cell sums plus face-difference
    gradient terms for the phase fields."""
    g = state.grid
    psi, _, _, _ = potential_and_derivatives(
        state.prolific.values, state.hypoxic.values, state.necrotic.values, p.well_prefactor
    )
    bulk = (
        psi
        + 0.5 * p.nutrient_diffusivity * state.nutrient.values**2
        + 0.5 * p.mde_diffusivity * state.mde.values**2
        + 0.5 * p.taf_diffusivity * state.taf.values**2
        - (p.chemotaxis * state.nutrient.values + p.haptotaxis * state.ecm.values)
        * (state.prolific.values + state.hypoxic.values)
    )
    total = float(bulk.sum()) * g.cell_volume
    for phi, eps in (
        (state.prolific, p.interface_width_prolific),
        (state.hypoxic, p.interface_width_hypoxic),
        (state.necrotic, p.interface_width_necrotic),
    ):
        if eps == 0.0:
            continue
        grad = face_gradient(phi)
        sq = sum(float((c**2).sum()) for c in grad.components())
        total += 0.5 * eps**2 * sq * g.cell_volume
    return total


@dataclass
class _FlowCache:
    matrix: CsrMatrix | None = None
    leak_diag: np.ndarray | None = None


def _leak_rhs(cmap: CouplingMap, lp: float, p_v: np.ndarray) -> np.ndarray:
    """Per-volume leakage source with the vessel pressure of each segment."""
    g = cmap.grid
    pv_seg = cmap.node_average(p_v)
    per_point = cmap.weights * lp * np.repeat(pv_seg, cmap.n_theta) / g.cell_volume
    out = np.zeros(g.n_cells)
    np.add.at(out, cmap.cells_flat, per_point)
    return out


def coupled_flow_solve(
    state: TissueState,
    vessel: VesselState,
    dnet: DiscreteNetwork,
    cmap: CouplingMap,
    params: Parameters,
    cfg: TimeLoopConfig,
    bc: FlowBC | None = None,
    solver: SolverConfig | None = None,
    cache: _FlowCache | None = None,
) -> tuple[CellField, FaceField, np.ndarray, np.ndarray, int, KortewegSource]:
    """Alternating network/tissue pressure solves until self-consistent.

    The tissue operator carries the mass-lumped leakage diagonal (constant
    across iterations), so only right-hand sides change; with zero wall
    permeability the two problems decouple and a single pass suffices.
    Returns (p, v, p_v, v_v, iterations, S_p).
    """
    if bc is None:
        bc = FlowBC()
    if solver is None:
        solver = SolverConfig()
    lp = params.wall_hydraulic_permeability
    g = state.grid
    s_p = korteweg_source(state, params)
    mat, rhs0 = assemble_tissue_pressure(g, params.tissue_permeability, None, s_p, bc)
    if lp > 0.0:
        if cache is not None and cache.leak_diag is not None:
            leak_diag = cache.leak_diag
        else:
            leak_diag = np.zeros(g.n_cells)
            np.add.at(leak_diag, cmap.cells_flat, cmap.weights * lp / g.cell_volume)
            if cache is not None:
                cache.leak_diag = leak_diag
        m = mat.to_scipy() + sp.diags(leak_diag)
        m.sort_indices()
        mat = CsrMatrix.from_scipy(m)
    elif not bc.dirichlet_sides:
        raise EngineError(
            "tissue pressure needs a Dirichlet patch when the wall leakage is zero"
        )

    p_field = state.pressure.copy()
    p_v = vessel.p_v.copy()
    iterations = 0
    change = math.inf
    max_iters = 1 if lp == 0.0 else cfg.fixed_point_max_iters
    for iterations in range(1, max_iters + 1):
        pbar = circle_average(p_field, cmap)
        p_v_new = solve_vgm_pressure(dnet, pbar, lp, solver, x0=p_v)
        rhs = rhs0 + _leak_rhs(cmap, lp, p_v_new) if lp > 0.0 else rhs0
        x, _ = solve(mat, rhs, solver, x0=p_field.flat().copy())
        p_new = CellField(g, x.reshape((g.n,) * 3))
        scale = max(float(np.abs(x).max()), float(np.abs(p_v_new).max()), 1.0)
        change = max(
            float(np.abs(p_v_new - p_v).max()),
            float(np.abs(p_new.values - p_field.values).max()),
        ) / scale
        p_field, p_v = p_new, p_v_new
        if lp == 0.0 or change < cfg.fixed_point_tol:
            break
    else:
        raise FixedPointError(max_iters, change)
    v_v = edge_flux(dnet, p_v)
    vel = face_velocity(p_field, s_p, params.tissue_permeability, bc)
    return p_field, vel, p_v, v_v, iterations, s_p


@dataclass
class ExchangeFluxes:
    """Per-point exchange data for one step."""

    fluid_per_point: np.ndarray  # Starling flux samples
    nutrient_explicit: np.ndarray  # vessel-side + advective part of the KK flux
    nutrient_implicit_coeff: float  # multiplies the local tissue nutrient
    source: CellField  # explicit per-volume deposit for the nutrient equation
    diag: CellField  # implicit per-volume diagonal for the nutrient equation

    def realized_per_point(self, cmap: CouplingMap, nutrient_new: CellField) -> np.ndarray:
        """KK fluxes actually applied by the implicit nutrient step."""
        return self.nutrient_explicit - self.nutrient_implicit_coeff * (
            nutrient_new.flat()[cmap.cells_flat]
        )


def evaluate_exchange(
    state: TissueState,
    vessel: VesselState,
    cmap: CouplingMap,
    params: Parameters,
    nutrient_field: CellField | None = None,
) -> ExchangeFluxes:
    """Sample the wall fluxes at the surface quadrature points.

    Tissue-side values are pointwise trilinear samples; vessel-side values
    are the nodal averages of each segment. The Fickian part proportional
    to the tissue nutrient is returned as an implicit diagonal (evaluated
    at the containing cell), keeping the stiff exchange unconditionally
    stable; everything else is explicit.
    """
    g = state.grid
    nutrient = state.nutrient if nutrient_field is None else nutrient_field
    p_tri = sample_trilinear(state.pressure, cmap.points)
    sig_tri = sample_trilinear(nutrient, cmap.points)
    pv_pt = np.repeat(cmap.node_average(vessel.p_v), cmap.n_theta)
    phiv_pt = np.repeat(cmap.node_average(vessel.phi_v), cmap.n_theta)
    lp = params.wall_hydraulic_permeability
    ls = params.wall_nutrient_permeability
    fluid = lp * (pv_pt - p_tri)
    carried = np.where(pv_pt >= p_tri, phiv_pt, sig_tri)
    explicit = (1.0 - params.reflection) * fluid * carried + ls * phiv_pt
    source = np.zeros(g.n_cells)
    np.add.at(source, cmap.cells_flat, cmap.weights * explicit / g.cell_volume)
    diag = np.zeros(g.n_cells)
    np.add.at(diag, cmap.cells_flat, cmap.weights * ls / g.cell_volume)
    return ExchangeFluxes(
        fluid_per_point=fluid,
        nutrient_explicit=explicit,
        nutrient_implicit_coeff=ls,
        source=CellField(g, source.reshape((g.n,) * 3)),
        diag=CellField(g, diag.reshape((g.n,) * 3)),
    )


def step(
    state: TissueState,
    vessel: VesselState,
    dnet: DiscreteNetwork,
    cmap: CouplingMap,
    params: Parameters,
    cfg: TimeLoopConfig,
    bc: FlowBC | None = None,
    solver: SolverConfig | None = None,
    flow_cache: _FlowCache | None = None,
    solve_flow: bool = True,
) -> int:
    """Advance the coupled state by one time step in place.

    Returns the fixed-point iteration count of the flow solve. With
    ``solve_flow=False`` the stored pressures/velocities are kept frozen
    (used by decoupled configurations and tests).
    """
    dt = cfg.dt
    fp_iters = 0
    outer_max = 1 if cfg.fixed_point_scope == "flow" else cfg.fixed_point_max_iters
    if solve_flow:
        p_field, vel, p_v, v_v, fp_iters, _ = coupled_flow_solve(
            state, vessel, dnet, cmap, params, cfg, bc, solver, flow_cache
        )
        state.pressure = p_field
        state.velocity = vel
        vessel.p_v = p_v
        vessel.v_v = v_v

    coupled = cmap is not None and cmap.n_segments > 0

    new_p, new_mu_p, new_h, new_mu_h = spc.advance_ch_pair(state, dt, params, solver)
    new_nec, new_ecm = spc.advance_necrotic_ecm(state, dt, params)

    if not coupled:
        new_sig, new_mde, new_taf = spc.advance_rd(state, dt, params, None, None, solver)
        new_phi_v = vessel.phi_v.copy() if vessel is not None else None
    else:
        # exchange-coupled sub-block: one pass with time-n couplings, or a
        # Picard iteration of nutrient <-> vessel nutrient when scope="all"
        sig_iter = None
        phi_v_iter = None
        for _ in range(outer_max):
            vessel_view = VesselState(
                vessel.p_v, vessel.phi_v if phi_v_iter is None else phi_v_iter, vessel.v_v
            )
            exchange = evaluate_exchange(
                state, vessel_view, cmap, params, nutrient_field=sig_iter
            )
            new_sig, new_mde, new_taf = spc.advance_rd(
                state, dt, params, exchange.source, exchange.diag, solver
            )
            j_eff = exchange.realized_per_point(cmap, new_sig)
            j_seg = cmap.segment_mean(j_eff)
            new_phi_v = advance_vessel_transport(
                dnet, vessel, j_seg, dt, params.vessel_nutrient_diffusivity, solver
            )
            if cfg.fixed_point_scope == "flow":
                break
            prev = state.nutrient.values if sig_iter is None else sig_iter.values
            delta = float(np.abs(new_sig.values - prev).max())
            sig_iter, phi_v_iter = new_sig, new_phi_v
            if delta < cfg.fixed_point_tol * max(1.0, float(np.abs(new_sig.values).max())):
                break

    state.prolific = new_p
    state.mu_prolific = new_mu_p
    state.hypoxic = new_h
    state.mu_hypoxic = new_mu_h
    state.necrotic = new_nec
    state.ecm = new_ecm
    state.nutrient = new_sig
    state.mde = new_mde
    state.taf = new_taf
    if vessel is not None and new_phi_v is not None:
        vessel.phi_v = new_phi_v
    state.mu_prolific = chemical_potential(state, "prolific", params)
    state.mu_hypoxic = chemical_potential(state, "hypoxic", params)
    state.time += dt
    return fp_iters


def collect_diagnostics(
    state: TissueState,
    vessel: VesselState | None,
    dnet: DiscreteNetwork | None,
    params: Parameters,
    fp_iters: int,
) -> Diagnostics:
    masses = {name: f.total() for name, f in state.phase_fields().items()}
    extrema = {
        name: (float(f.values.min()), float(f.values.max()))
        for name, f in state.phase_fields().items()
    }
    if vessel is not None and dnet is not None:
        ell = dnet.lumped_length()
        net_mass = float((vessel.phi_v * ell).sum())
        pv_lo, pv_hi = float(vessel.p_v.min()), float(vessel.p_v.max())
    else:
        net_mass, pv_lo, pv_hi = 0.0, 0.0, 0.0
    return Diagnostics(
        t=state.time,
        energy=compute_energy(state, params),
        masses=masses,
        phi_extrema=extrema,
        network_nutrient_mass=net_mass,
        pressure_extrema=(float(state.pressure.values.min()), float(state.pressure.values.max())),
        vessel_pressure_extrema=(pv_lo, pv_hi),
        fixed_point_iterations=fp_iters,
    )


def write_diagnostics_csv(path, history: list[Diagnostics]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(DIAGNOSTIC_COLUMNS)
        for d in history:
            w.writerow(f"{v:.17g}" if isinstance(v, float) else str(v) for v in d.row())


# ---------------------------------------------------------------------------
# scenario runner


def tumor_profile(r: np.ndarray, radius: float, interface_width: float) -> np.ndarray:
    """Initial tumor fraction: a clamped tanh shoulder that decays smoothly
    from 1 at the center to 0 at the rim, truncated outside the ball."""
    w = max(2.0 * interface_width, 1e-12)
    prof = np.clip(0.5 - 0.5 * np.tanh((r - radius + 3.0 * w) / w), 0.0, 1.0)
    return np.where(r > radius, 0.0, prof)


def build_initial_state(grid: Grid3D, initial, params: Parameters) -> TissueState:
    """Tissue state at t = 0: a prolific tumor ball, uniform nutrient and
    ECM, everything else zero, chemical potentials consistent."""
    state = TissueState.zeros(grid)
    X, Y, Z = grid.cell_center_mesh()
    cx, cy, cz = initial.tumor_center
    r = np.sqrt((X - cx) ** 2 + (Y - cy) ** 2 + (Z - cz) ** 2)
    state.prolific.values[:] = tumor_profile(r, initial.tumor_radius, params.interface_width_prolific)
    state.nutrient.values[:] = initial.nutrient
    state.ecm.values[:] = initial.ecm
    state.mu_prolific = chemical_potential(state, "prolific", params)
    state.mu_hypoxic = chemical_potential(state, "hypoxic", params)
    return state


@dataclass
class RunResult:
    history: list[Diagnostics]
    state: TissueState
    vessel: VesselState | None
    output_dir: str | None


class Simulation:
    """Builds grid/network/coupling from a scenario and drives the loop."""

    def __init__(self, scenario):
        from . import config as cfgmod  # deferred: config imports engine types
        from .network import refine

        self.scenario = scenario
        self.grid = Grid3D.cube(scenario.grid.n, scenario.grid.length, scenario.grid.origin)
        self.params = scenario.parameters
        self.time_cfg = scenario.time
        self.solver = scenario.solver
        self.net = cfgmod.build_network(scenario)
        target = scenario.network.subsegment_target or self.grid.h
        self.dnet = refine(self.net, target, self.params.blood_viscosity)
        self.cmap = None
        if self.dnet.n_segments:
            from .coupling import build_coupling_map

            self.cmap = build_coupling_map(self.grid, self.dnet, scenario.network.circle_points)
        self.bc = FlowBC()  # zero-flux tissue boundary; leakage anchors the operator
        self.state = build_initial_state(self.grid, scenario.initial, self.params)
        self.vessel = VesselState.zeros(self.dnet)
        self.flow_cache = _FlowCache()
        self.history: list[Diagnostics] = []
        self._prepared = False

    def prepare(self) -> int:
        """Initial flow solve plus the vessel-nutrient initialization."""
        from .network import steady_vessel_nutrient

        iters = self.initial_flow_solve()
        init = self.scenario.initial.vessel_nutrient
        if self.cmap is not None:
            if init == "steady":
                self.vessel.phi_v = steady_vessel_nutrient(
                    self.dnet,
                    self.vessel.v_v,
                    circle_average(self.state.pressure, self.cmap),
                    circle_average(self.state.nutrient, self.cmap),
                    self.vessel.p_v,
                    self.params.vessel_nutrient_diffusivity,
                    self.params.wall_hydraulic_permeability,
                    self.params.wall_nutrient_permeability,
                    self.params.reflection,
                    self.solver,
                )
            else:
                self.vessel.phi_v[:] = float(init)
                for node, val in self.dnet.nutrient_dirichlet().items():
                    self.vessel.phi_v[node] = val
        self._prepared = True
        return iters

    def initial_flow_solve(self) -> int:
        p, v, p_v, v_v, iters, _ = coupled_flow_solve(
            self.state, self.vessel, self.dnet, self.cmap, self.params,
            self.time_cfg, self.bc, self.solver, self.flow_cache,
        )
        self.state.pressure = p
        self.state.velocity = v
        self.vessel.p_v = p_v
        self.vessel.v_v = v_v
        return iters

    def step(self) -> Diagnostics:
        if not self._prepared:
            self.prepare()
        fp = step(
            self.state, self.vessel, self.dnet, self.cmap, self.params,
            self.time_cfg, self.bc, self.solver, self.flow_cache,
        )
        diag = collect_diagnostics(self.state, self.vessel, self.dnet, self.params, fp)
        if not diag.all_finite():
            raise EngineError(
                f"non-finite diagnostics at t={self.state.time:.6g} "
                f"(step {len(self.history)})"
            )
        return diag

    def run(self, output_dir=None, vtk_every: int | None = None) -> RunResult:
        """Run to t_end, recording diagnostics each step; optionally write
        VTK snapshots every ``vtk_every`` steps plus initial/final, and the
        diagnostics CSV, into ``output_dir``."""
        import os

        from .vtkio import write_vtk_grid, write_vtk_network

        if vtk_every is None:
            vtk_every = self.time_cfg.output_every
        writing = output_dir is not None
        if writing:
            os.makedirs(output_dir, exist_ok=True)

        fp0 = self.prepare()
        diag = collect_diagnostics(self.state, self.vessel, self.dnet, self.params, fp0)
        if not diag.all_finite():
            raise EngineError("non-finite diagnostics in the initial state")
        self.history = [diag]

        def snapshot(step_idx):
            write_vtk_grid(self.state, os.path.join(output_dir, f"state_{step_idx:06d}.vtk"))
            write_vtk_network(
                self.dnet, self.vessel, os.path.join(output_dir, f"network_{step_idx:06d}.vtk")
            )

        if writing:
            snapshot(0)
        n_steps = self.time_cfg.n_steps
        for k in range(1, n_steps + 1):
            self.history.append(self.step())
            if writing and vtk_every > 0 and (k % vtk_every == 0 or k == n_steps):
                snapshot(k)
        if writing:
            write_diagnostics_csv(os.path.join(output_dir, "diagnostics.csv"), self.history)
        return RunResult(self.history, self.state, self.vessel, output_dir)


def run_scenario(scenario, output_dir=None, vtk_every=None) -> RunResult:
    """Convenience wrapper: build a Simulation and run it."""
    sim = Simulation(scenario)
    if output_dir is None:
        import os

        output_dir = os.path.join(scenario.base_dir, scenario.output.directory)
    return sim.run(output_dir=output_dir, vtk_every=vtk_every)
