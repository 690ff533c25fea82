"""Step orchestration, energy diagnostics, coupled flow fixed point."""

import numpy as np
import pytest

from conftest import inert_params
from vtgrowth import config as CFG
from vtgrowth import coupling as C
from vtgrowth import engine as E
from vtgrowth import grid as G
from vtgrowth import network as N
from vtgrowth import species as S
from vtgrowth.linalg import SolverConfig, spmv


def make_state(grid, **fields):
    st = S.TissueState.zeros(grid)
    for name, val in fields.items():
        getattr(st, name).values[:] = val
    return st


def desk_scenario(n=12, dt=0.05, t_end=0.1):
    cfg = CFG.builtin_scenario("two-vessel")
    cfg.grid.n = n
    cfg.time.dt = dt
    cfg.time.t_end = t_end
    return cfg


class TestEnergy:
    def test_zero_state(self):
        g = G.Grid3D.cube(8, 2.0)
        assert E.compute_energy(S.TissueState.zeros(g), S.Parameters()) == 0.0

    def test_uniform_nutrient_quadratic_term(self):
        g = G.Grid3D.cube(8, 2.0)
        st = make_state(g, nutrient=0.6)
        # D_sigma/2 * 0.36 * |domain| = 0.5 * 0.36 * 8
        assert E.compute_energy(st, S.Parameters()) == pytest.approx(1.44)

    def test_well_plus_chemotaxis_terms(self):
        g = G.Grid3D.cube(8, 2.0)
        st = make_state(g, prolific=0.5, nutrient=0.6)
        p = S.Parameters(chemotaxis=0.05)
        psi = 0.045 * 0.25 * 0.25
        expected = psi * 8.0 + 1.44 - 0.05 * 0.6 * 0.5 * 8.0
        assert E.compute_energy(st, p) == pytest.approx(expected)

    def test_gradient_term(self):
        g = G.Grid3D.cube(8, 2.0)
        st = S.TissueState.zeros(g)
        X, _, _ = g.cell_center_mesh()
        st.prolific.values[:] = np.where(X > 1.0, 1.0, 0.0)
        p = inert_params()
        # one interface plane of n^2 faces with jump 1: eps^2/2 * n^2 * h
        grad_term = 0.5 * p.interface_width_prolific**2 * (8**2) * g.h
        assert E.compute_energy(st, p) == pytest.approx(grad_term, rel=1e-12)


class TestDecoupledStepEquivalence:
    def test_step_matches_direct_species_calls_bitwise(self, rng):
        # no flow, no exchange: the engine step must reproduce the species
        # operations exactly, field by field
        g = G.Grid3D.cube(10, 2.0)
        p = S.Parameters()  # full reaction set, but no coupling inputs
        st = S.TissueState.zeros(g)
        for f in st.phase_fields().values():
            f.values[:] = rng.uniform(0.1, 0.9, size=(10,) * 3)
        st.mu_prolific = S.chemical_potential(st, "prolific", p)
        st.mu_hypoxic = S.chemical_potential(st, "hypoxic", p)
        ref = st.copy()

        cfg = E.TimeLoopConfig(dt=0.025, t_end=0.025)
        solver = SolverConfig()
        engine_state = st.copy()
        E.step(engine_state, None, None, None, p, cfg, solver=solver, solve_flow=False)

        new_p, _, new_h, _ = S.advance_ch_pair(ref, 0.025, p, solver)
        new_nec, new_ecm = S.advance_necrotic_ecm(ref, 0.025, p)
        new_sig, new_mde, new_taf = S.advance_rd(ref, 0.025, p, None, None, solver)

        assert np.array_equal(engine_state.prolific.values, new_p.values)
        assert np.array_equal(engine_state.hypoxic.values, new_h.values)
        assert np.array_equal(engine_state.necrotic.values, new_nec.values)
        assert np.array_equal(engine_state.ecm.values, new_ecm.values)
        assert np.array_equal(engine_state.nutrient.values, new_sig.values)
        assert np.array_equal(engine_state.mde.values, new_mde.values)
        assert np.array_equal(engine_state.taf.values, new_taf.values)

    def test_uniform_fixed_point_state_unchanged(self):
        g = G.Grid3D.cube(8, 2.0)
        p = inert_params()
        st = make_state(g, prolific=0.4, nutrient=0.6, ecm=1.0)
        st.mu_prolific = S.chemical_potential(st, "prolific", p)
        st.mu_hypoxic = S.chemical_potential(st, "hypoxic", p)
        cfg = E.TimeLoopConfig(dt=0.025, t_end=0.025)
        E.step(st, None, None, None, p, cfg, solve_flow=False)
        assert np.allclose(st.prolific.values, 0.4, atol=1e-11)
        assert np.allclose(st.nutrient.values, 0.6, atol=1e-11)


class TestCoupledFlow:
    def test_zero_leakage_decouples_in_one_iteration(self):
        cfg = desk_scenario(n=10)
        cfg.parameters = cfg.parameters.replace(wall_hydraulic_permeability=0.0)
        sim = E.Simulation(cfg)
        sim.bc = E.FlowBC(dirichlet_sides=((0, 0),), value=0.0)
        iters = sim.initial_flow_solve()
        assert iters == 1

    def test_fixed_point_converges_quickly(self):
        cfg = desk_scenario(n=12)
        sim = E.Simulation(cfg)
        iters = sim.initial_flow_solve()
        assert iters <= 5

    def test_converged_network_residual(self):
        # the converged pair satisfies the assembled network system
        cfg = desk_scenario(n=12)
        cfg.time.fixed_point_tol = 1e-10
        sim = E.Simulation(cfg)
        sim.initial_flow_solve()
        pbar = C.circle_average(sim.state.pressure, sim.cmap)
        mat_n, rhs_n = N.assemble_vgm_pressure(
            sim.dnet, pbar, sim.params.wall_hydraulic_permeability
        )
        res_n = np.abs(spmv(mat_n, sim.vessel.p_v) - rhs_n).max()
        assert res_n <= 1e-6 * np.abs(rhs_n).max()

    def test_missing_anchor_raises(self):
        cfg = desk_scenario(n=10)
        cfg.parameters = cfg.parameters.replace(wall_hydraulic_permeability=0.0)
        sim = E.Simulation(cfg)  # all-Neumann BC with zero leakage
        with pytest.raises(E.EngineError):
            sim.initial_flow_solve()

    def test_pressure_between_vessel_extremes_one_step(self):
        cfg = desk_scenario(n=16, dt=0.05, t_end=0.05)
        sim = E.Simulation(cfg)
        sim.run()
        lo, hi = sim.history[-1].pressure_extrema
        assert lo >= 1000.0 - 1e-6
        assert hi <= 10000.0 + 1e-6


class TestStepBudget:
    @staticmethod
    def sealed_sim(n=12):
        # equal vessel pressures (no flow, no boundary advection), free
        # nutrient ends, no reactions: total nutrient must be conserved
        cfg = desk_scenario(n=n, dt=0.05, t_end=0.2)
        cfg.parameters = inert_params()
        cfg.initial.vessel_nutrient = 0.9
        cfg.initial.nutrient = 0.3
        cfg.solver = SolverConfig(rel_tol=1e-12)  # budget below solver noise
        sim = E.Simulation(cfg)
        for bc in sim.dnet.boundary.values():
            bc.pressure = 4000.0
            bc.nutrient = None
        return sim

    def test_exchange_conserves_total_nutrient(self):
        sim = self.sealed_sim()
        sim.prepare()
        ell = sim.dnet.lumped_length()
        total0 = sim.state.nutrient.total() + float(sim.vessel.phi_v @ ell)
        for _ in range(4):
            sim.step()
        total1 = sim.state.nutrient.total() + float(sim.vessel.phi_v @ ell)
        assert total1 == pytest.approx(total0, rel=1e-8)
        # and the exchange actually moved mass vessel -> tissue
        assert sim.state.nutrient.total() > 0.3 * 8.0 + 1e-3

    def test_tissue_gain_equals_realized_flux(self):
        sim = self.sealed_sim()
        sim.prepare()
        state, vessel = sim.state, sim.vessel
        tissue0 = state.nutrient.total()
        exchange = E.evaluate_exchange(state, vessel, sim.cmap, sim.params)
        new_sig, _, _ = S.advance_rd(
            state, 0.05, sim.params, exchange.source, exchange.diag, sim.solver
        )
        j_eff = exchange.realized_per_point(sim.cmap, new_sig)
        tissue_gain = float((sim.cmap.weights * j_eff).sum())
        assert new_sig.total() - tissue0 == pytest.approx(0.05 * tissue_gain, abs=1e-10)


class TestRunLoop:
    def test_zero_horizon_snapshot_only(self, tmp_path):
        cfg = desk_scenario(n=10, dt=0.05, t_end=0.0)
        sim = E.Simulation(cfg)
        res = sim.run(output_dir=str(tmp_path))
        assert len(res.history) == 1
        assert (tmp_path / "state_000000.vtk").exists()
        assert (tmp_path / "diagnostics.csv").exists()

    def test_csv_row_count(self, tmp_path):
        cfg = desk_scenario(n=10, dt=0.05, t_end=0.2)
        E.run_scenario(cfg, output_dir=str(tmp_path))
        lines = (tmp_path / "diagnostics.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + cfg.time.n_steps + 1  # header + t0 + steps
        assert lines[0] == ",".join(E.DIAGNOSTIC_COLUMNS)

    def test_determinism_byte_identical(self, tmp_path):
        cfg = desk_scenario(n=10, dt=0.05, t_end=0.15)
        E.run_scenario(cfg, output_dir=str(tmp_path / "a"))
        E.run_scenario(cfg, output_dir=str(tmp_path / "b"))
        assert (tmp_path / "a" / "diagnostics.csv").read_bytes() == (
            tmp_path / "b" / "diagnostics.csv"
        ).read_bytes()

    def test_all_scope_runs(self):
        cfg = desk_scenario(n=10, dt=0.05, t_end=0.05)
        cfg.time.fixed_point_scope = "all"
        sim = E.Simulation(cfg)
        res = sim.run()
        assert res.history[-1].all_finite()

    def test_tumor_profile_shape(self):
        r = np.array([0.0, 0.2, 0.3, 0.5])
        prof = E.tumor_profile(r, 0.3, 0.005)
        assert prof[0] == pytest.approx(1.0, abs=1e-6)
        assert prof[-1] == 0.0
        assert np.all(np.diff(prof) <= 0)
