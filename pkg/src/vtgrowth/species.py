"""Tissue species dynamics on the 3D mesh.

Covers the Cahn-Hilliard pair (prolific/hypoxic phases), the local ODEs for
the necrotic phase and the extracellular matrix, the reaction-diffusion trio
(nutrient, MDE, TAF), the double-well potential with quadratic extension,
degenerate mobilities with a floor, and the transition source functions.

Nonlinear coefficients are evaluated through the clamp-to-[0,1] cut-off, and
threshold switching uses either a sharp step (default) or a sigmoid of
configurable width. The five species prolific/hypoxic/necrotic/nutrient/ECM
form a closed subsystem: their sources cancel pointwise by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
import scipy.sparse as sp

from . import grid as gridmod
from .grid import CellField, FaceField, Grid3D, apply_neumann_laplacian, build_laplacian, upwind_divergence
from .linalg import CsrMatrix, SolverConfig, solve


class CFLError(RuntimeError):
    pass


@dataclass
class Parameters:
    """Model constants; defaults reproduce the reference parameter set.

    Rates and thresholds not listed there default to zero (chemotaxis,
    haptotaxis, TAF decay, TAF production threshold, reflection).
    """

    # growth / death / phase transitions
    mitosis_rate: float = 5.0
    mitosis_rate_hypoxic: float = 0.5
    apoptosis_rate: float = 0.005
    apoptosis_rate_hypoxic: float = 0.005
    prolific_to_hypoxic_rate: float = 1.0
    hypoxic_to_prolific_rate: float = 1.0
    hypoxic_to_necrotic_rate: float = 1.0
    prolific_to_hypoxic_threshold: float = 0.55
    hypoxic_to_prolific_threshold: float = 0.65
    hypoxic_to_necrotic_threshold: float = 0.44
    # phase-field interface widths and mobilities
    interface_width_prolific: float = 0.005
    interface_width_hypoxic: float = 0.005
    interface_width_necrotic: float = 0.0
    mobility_prolific: float = 50.0
    mobility_hypoxic: float = 25.0
    # reaction-diffusion coefficients
    nutrient_diffusivity: float = 1.0
    nutrient_mobility: float = 1.0
    mde_diffusivity: float = 0.5
    mde_mobility: float = 1.0
    taf_diffusivity: float = 0.5
    taf_mobility: float = 1.0
    # ECM / MDE / TAF kinetics
    ecm_degradation_rate: float = 5.0
    ecm_production_rate: float = 0.01
    ecm_production_threshold: float = 0.5
    mde_decay_rate: float = 1.0
    mde_production_rate: float = 1.0
    taf_production_rate: float = 10.0
    taf_decay_rate: float = 0.0
    taf_production_threshold: float = 0.0
    # taxis and energy
    chemotaxis: float = 0.0
    haptotaxis: float = 0.0
    well_prefactor: float = 0.045
    # flow and transvascular exchange
    tissue_permeability: float = 1e-9
    wall_hydraulic_permeability: float = 1e-7
    wall_nutrient_permeability: float = 10.0
    reflection: float = 0.0
    blood_viscosity: float = 1.0
    vessel_nutrient_diffusivity: float = 0.1
    # numerical regularization
    heaviside_width: float = 0.0
    mobility_floor: float = 1e-6
    stabilization_factor: float = 3.0

    def replace(self, **kw) -> "Parameters":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(kw)
        return Parameters(**d)


@dataclass
class TissueState:
    """All cell-centered fields plus face velocities at one time level."""

    grid: Grid3D
    prolific: CellField
    hypoxic: CellField
    necrotic: CellField
    nutrient: CellField
    mde: CellField
    taf: CellField
    ecm: CellField
    mu_prolific: CellField
    mu_hypoxic: CellField
    pressure: CellField
    velocity: FaceField
    time: float = 0.0

    @classmethod
    def zeros(cls, grid: Grid3D) -> "TissueState":
        f = lambda: CellField.zeros(grid)
        return cls(grid, f(), f(), f(), f(), f(), f(), f(), f(), f(), f(), FaceField.zeros(grid))

    def tumor_total(self) -> np.ndarray:
        return self.prolific.values + self.hypoxic.values + self.necrotic.values

    def phase_fields(self) -> dict[str, CellField]:
        return {
            "prolific": self.prolific,
            "hypoxic": self.hypoxic,
            "necrotic": self.necrotic,
            "nutrient": self.nutrient,
            "mde": self.mde,
            "taf": self.taf,
            "ecm": self.ecm,
        }

    def copy(self) -> "TissueState":
        return TissueState(
            self.grid,
            *(getattr(self, name).copy() for name in (
                "prolific", "hypoxic", "necrotic", "nutrient", "mde", "taf",
                "ecm", "mu_prolific", "mu_hypoxic", "pressure",
            )),
            self.velocity.copy(),
            self.time,
        )


def cutoff(x):
    """Clamp to [0, 1]."""
    return np.clip(x, 0.0, 1.0)


def heaviside(x, width: float = 0.0):
    """Threshold switch: sharp step with H(0) = 1, or a sigmoid of given width."""
    x = np.asarray(x, dtype=float)
    if width == 0.0:
        out = np.where(x >= 0.0, 1.0, 0.0)
    else:
        out = 1.0 / (1.0 + np.exp(-x / width))
    if out.ndim == 0:
        return float(out)
    return out


def potential_and_derivatives(phi_p, phi_h, phi_n, well_prefactor: float):
    """Double well C s^2 (1-s)^2 of the total tumor fraction s, extended
    quadratically outside [0, 1]; returns (psi, d/dp, d/dh, d/dn).

    The three partial derivatives coincide because the well depends on the
    phases only through their sum.
    """
    s = np.asarray(phi_p, dtype=float) + phi_h + phi_n
    c = well_prefactor
    below = s < 0.0
    above = s > 1.0
    psi = c * np.where(below, s**2, np.where(above, (1.0 - s) ** 2, s**2 * (1.0 - s) ** 2))
    dpsi = c * np.where(
        below, 2.0 * s, np.where(above, -2.0 * (1.0 - s), 2.0 * s * (1.0 - s) * (1.0 - 2.0 * s))
    )
    if psi.ndim == 0:
        return float(psi), float(dpsi), float(dpsi), float(dpsi)
    return psi, dpsi, dpsi, dpsi


def ch_mobility(phi, mobility: float, mobility_floor: float):
    """Degenerate mobility M c^2 (1-c)^2 with cut-off and a positive floor."""
    c = cutoff(phi)
    return np.maximum(mobility_floor, mobility * c**2 * (1.0 - c) ** 2)


def eval_sources(phi_p, phi_h, phi_n, phi_sig, phi_mde, phi_taf, phi_ecm, p: Parameters):
    """Transition/growth sources for all seven species at given cell values.

    Every volume-fraction factor inside a product is passed through the
    cut-off; the prolific/hypoxic/necrotic/nutrient/ECM sources cancel
    pointwise (closed subsystem), while MDE and TAF carry net decay.
    """
    H = lambda x: heaviside(x, p.heaviside_width)
    cp = cutoff(phi_p)
    ch = cutoff(phi_h)
    csig = cutoff(phi_sig)
    cmde = cutoff(phi_mde)
    ctaf = cutoff(phi_taf)
    cecm = cutoff(phi_ecm)
    room = cutoff(1.0 - (np.asarray(phi_p, dtype=float) + phi_h + phi_n))

    growth_p = p.mitosis_rate * csig * cp * room
    growth_h = p.mitosis_rate_hypoxic * csig * ch * room
    to_hypoxic = p.prolific_to_hypoxic_rate * H(p.prolific_to_hypoxic_threshold - phi_sig) * cp
    to_prolific = p.hypoxic_to_prolific_rate * H(phi_sig - p.hypoxic_to_prolific_threshold) * ch
    to_necrotic = p.hypoxic_to_necrotic_rate * H(p.hypoxic_to_necrotic_threshold - phi_sig) * ch
    ecm_degradation = p.ecm_degradation_rate * cecm * cmde
    ecm_production = (
        p.ecm_production_rate
        * csig
        * cutoff(1.0 - np.asarray(phi_ecm, dtype=float))
        * H(phi_ecm - p.ecm_production_threshold)
    )

    s_p = growth_p - p.apoptosis_rate * cp - to_hypoxic + to_prolific
    s_h = growth_h - p.apoptosis_rate_hypoxic * ch + to_hypoxic - to_prolific - to_necrotic
    s_n = to_necrotic
    s_sig = (
        -growth_p
        - growth_h
        + p.apoptosis_rate * cp
        + p.apoptosis_rate_hypoxic * ch
        + ecm_degradation
        - ecm_production
    )
    s_mde = (
        -p.mde_decay_rate * cmde
        + p.mde_production_rate
        * (cp + ch)
        * cecm
        * (p.hypoxic_to_prolific_threshold / (p.hypoxic_to_prolific_threshold + csig))
        * cutoff(1.0 - np.asarray(phi_mde, dtype=float))
        - ecm_degradation
    )
    s_taf = (
        p.taf_production_rate
        * cutoff(1.0 - np.asarray(phi_taf, dtype=float))
        * ch
        * H(phi_h - p.taf_production_threshold)
        - p.taf_decay_rate * ctaf
    )
    s_ecm = -ecm_degradation + ecm_production
    return s_p, s_h, s_n, s_sig, s_mde, s_taf, s_ecm


def eval_sources_state(state: TissueState, p: Parameters):
    return eval_sources(
        state.prolific.values,
        state.hypoxic.values,
        state.necrotic.values,
        state.nutrient.values,
        state.mde.values,
        state.taf.values,
        state.ecm.values,
        p,
    )


def chemical_potential(state: TissueState, which: str, p: Parameters) -> CellField:
    """Variational derivative of the free energy for one phase field:
    well slope minus eps^2 Laplacian minus the taxis corrections."""
    if which == "prolific":
        phi, eps = state.prolific, p.interface_width_prolific
    elif which == "hypoxic":
        phi, eps = state.hypoxic, p.interface_width_hypoxic
    else:
        raise ValueError(f"no chemical potential for {which!r}")
    _, dpsi, _, _ = potential_and_derivatives(
        state.prolific.values, state.hypoxic.values, state.necrotic.values, p.well_prefactor
    )
    lap = apply_neumann_laplacian(phi.values, state.grid.h)
    mu = dpsi - eps**2 * lap - p.chemotaxis * state.nutrient.values - p.haptotaxis * state.ecm.values
    return CellField(state.grid, mu)


def _face_average(cell_vals: np.ndarray, axis: int) -> np.ndarray:
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    return 0.5 * (cell_vals[tuple(lo)] + cell_vals[tuple(hi)])


def _variable_diffusion_matrix(g: Grid3D, face_coeff: FaceField) -> sp.csr_matrix:
    """-div(coeff grad .) with zero-flux BC, per-volume scaling."""
    n = g.n
    inv_h2 = 1.0 / g.h**2
    rows, cols, vals = [], [], []
    idx = np.arange(n**3).reshape((n,) * 3)
    diag = np.zeros((n,) * 3)
    for axis, comp in enumerate(face_coeff.components()):
        inner = [slice(None)] * 3
        inner[axis] = slice(1, -1)
        coeff = comp[tuple(inner)] * inv_h2  # interior faces only
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        left = idx[tuple(lo)]
        right = idx[tuple(hi)]
        diag[tuple(lo)] += coeff
        diag[tuple(hi)] += coeff
        rows.append(left.ravel())
        cols.append(right.ravel())
        vals.append(-coeff.ravel())
        rows.append(right.ravel())
        cols.append(left.ravel())
        vals.append(-coeff.ravel())
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    m = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n**3, n**3),
    ).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return m


def _check_cfl(v: FaceField, dt: float, h: float):
    vmax = v.max_abs()
    if dt * vmax / h > 1.0 + 1e-12:
        raise CFLError(f"convective CFL violated: dt*|v|/h = {dt * vmax / h:.3f} > 1")


def advance_ch_pair(
    state: TissueState,
    dt: float,
    p: Parameters,
    solver: SolverConfig | None = None,
):
    """One semi-implicit step of the two Cahn-Hilliard fields.

    Per field, the scheme treats the well slope as an implicit linear
    stabilization plus an explicit remainder, interface diffusion
    implicitly, mobility lagged at the old state, and upwind convection and
    sources explicitly:

        (phi' - phi)/dt + div_up(C(phi) v) = div(m grad mu') + S
        mu' = stab*(phi' - phi) + Psi'(phi_T) - eps^2 Lap phi' - taxis

    The potential equation is eliminated into the mass balance, so one
    n-cell nonsymmetric system is solved per field (BiCGStab) and mu is
    recovered by substitution. Returns (phi_p, mu_p, phi_h, mu_h) as new
    CellFields; the input state is not modified.
    """
    g = state.grid
    _check_cfl(state.velocity, dt, g.h)
    if solver is None:
        solver = SolverConfig(method="bicgstab")
    elif solver.method != "bicgstab":
        solver = SolverConfig("bicgstab", solver.rel_tol, solver.abs_tol, solver.max_iters, solver.preconditioner)
    n3 = g.n_cells
    lap = build_laplacian(g, gridmod.NEUMANN).to_scipy()  # -Laplacian
    eye = sp.identity(n3, format="csr")
    _, dpsi, _, _ = potential_and_derivatives(
        state.prolific.values, state.hypoxic.values, state.necrotic.values, p.well_prefactor
    )
    taxis = p.chemotaxis * state.nutrient.values + p.haptotaxis * state.ecm.values
    stab = p.stabilization_factor * p.well_prefactor
    sources = eval_sources_state(state, p)
    results = []
    shape = (g.n,) * 3
    for phi, mob_const, eps, s_expl in (
        (state.prolific, p.mobility_prolific, p.interface_width_prolific, sources[0]),
        (state.hypoxic, p.mobility_hypoxic, p.interface_width_hypoxic, sources[1]),
    ):
        mob = ch_mobility(phi.values, mob_const, p.mobility_floor)
        face_mob = FaceField.zeros(g)
        for axis, comp in enumerate(face_mob.components()):
            inner = [slice(None)] * 3
            inner[axis] = slice(1, -1)
            comp[tuple(inner)] = _face_average(mob, axis)
        a_mob = _variable_diffusion_matrix(g, face_mob)  # -div(m grad .)
        potential_op = (stab * eye + eps**2 * lap).tocsr()
        conv = upwind_divergence(cutoff(phi.values), state.velocity)
        rhs_mass = phi.values.ravel() / dt - conv.ravel() + s_expl.ravel()
        mu_expl = (-stab * phi.values + dpsi - taxis).ravel()
        mat = (eye / dt + a_mob @ potential_op).tocsr()
        mat.sort_indices()
        rhs = rhs_mass - a_mob @ mu_expl
        x, _ = solve(CsrMatrix.from_scipy(mat), rhs, solver, x0=phi.flat().copy())
        mu = potential_op @ x + mu_expl
        results.append(CellField(g, x.reshape(shape).copy()))
        results.append(CellField(g, mu.reshape(shape).copy()))
    return tuple(results)


def advance_necrotic_ecm(state: TissueState, dt: float, p: Parameters):
    """Explicit Euler for the two local ODE species; returns (necrotic, ecm)."""
    sources = eval_sources_state(state, p)
    nec = state.necrotic.values + dt * sources[2]
    ecm = state.ecm.values + dt * sources[6]
    return CellField(state.grid, nec), CellField(state.grid, ecm)


def advance_rd(
    state: TissueState,
    dt: float,
    p: Parameters,
    nutrient_surface_source: CellField | None = None,
    nutrient_exchange_diag: CellField | None = None,
    solver: SolverConfig | None = None,
):
    """One semi-implicit step of nutrient, MDE and TAF.

    Diffusion is implicit; reactions, upwind convection of the nutrient and
    its cross-diffusion drift down the tumor gradient are explicit. The
    transvascular nutrient exchange enters as an explicit per-volume source
    plus an optional mass-lumped implicit diagonal (the part proportional to
    the local nutrient value), which keeps the stiff wall exchange stable.
    Returns (nutrient, mde, taf) as new CellFields.
    """
    g = state.grid
    _check_cfl(state.velocity, dt, g.h)
    if solver is None:
        solver = SolverConfig()
    sources = eval_sources_state(state, p)
    lap = build_laplacian(g, gridmod.NEUMANN).to_scipy()
    eye = sp.identity(g.n_cells, format="csr")
    out = []

    # nutrient: convection + cross-diffusion + exchange
    conv = upwind_divergence(cutoff(state.nutrient.values), state.velocity)
    cross = np.zeros_like(conv)
    if p.chemotaxis != 0.0:
        # div(-chi m grad(phi_P + phi_H)) as explicit face fluxes
        cross = (
            -p.chemotaxis
            * p.nutrient_mobility
            * apply_neumann_laplacian(state.prolific.values + state.hypoxic.values, g.h)
        )
    rhs = state.nutrient.values.ravel() / dt - conv.ravel() + cross.ravel() + sources[3].ravel()
    diff = p.nutrient_diffusivity * p.nutrient_mobility
    mat = eye / dt + diff * lap
    if nutrient_surface_source is not None:
        rhs = rhs + nutrient_surface_source.flat()
    if nutrient_exchange_diag is not None:
        mat = mat + sp.diags(nutrient_exchange_diag.flat())
    mat = mat.tocsr()
    mat.sort_indices()
    x, _ = solve(CsrMatrix.from_scipy(mat), rhs, solver, x0=state.nutrient.flat().copy())
    out.append(CellField(g, x.reshape((g.n,) * 3).copy()))

    for phi, diff_const, s_expl in (
        (state.mde, p.mde_diffusivity * p.mde_mobility, sources[4]),
        (state.taf, p.taf_diffusivity * p.taf_mobility, sources[5]),
    ):
        mat = (eye / dt + diff_const * lap).tocsr()
        mat.sort_indices()
        rhs = phi.values.ravel() / dt + s_expl.ravel()
        x, _ = solve(CsrMatrix.from_scipy(mat), rhs, solver, x0=phi.flat().copy())
        out.append(CellField(g, x.reshape((g.n,) * 3).copy()))
    return tuple(out)
