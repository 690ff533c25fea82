"""Potentials, sources, mobilities and the species time steps."""

import numpy as np
import pytest

from conftest import inert_params, smooth_noise
from vtgrowth import grid as G
from vtgrowth import species as S
from vtgrowth.linalg import SolverConfig


class TestCutoffHeaviside:
    def test_cutoff(self):
        assert S.cutoff(-0.3) == 0.0
        assert S.cutoff(0.4) == 0.4
        assert S.cutoff(1.7) == 1.0
        assert np.array_equal(S.cutoff(np.array([-1.0, 0.5, 2.0])), [0.0, 0.5, 1.0])

    def test_step_with_tie_at_one(self):
        assert S.heaviside(-0.05) == 0.0
        assert S.heaviside(0.05) == 1.0
        assert S.heaviside(0.0) == 1.0

    def test_sigmoid(self):
        assert S.heaviside(0.0, width=0.01) == pytest.approx(0.5)
        assert S.heaviside(0.05, width=0.01) == pytest.approx(1.0 / (1.0 + np.exp(-5.0)))


class TestPotential:
    def test_well_bottom(self):
        psi, dp, dh, dn = S.potential_and_derivatives(0.0, 0.0, 0.0, 0.045)
        assert psi == 0.0 and dp == 0.0

    def test_symmetric_midpoint(self):
        psi, dp, _, _ = S.potential_and_derivatives(0.5, 0.0, 0.0, 0.045)
        assert psi == pytest.approx(0.045 * 0.25 * 0.25)
        assert dp == pytest.approx(0.0, abs=1e-15)

    def test_quadratic_extension_below(self):
        psi, dp, _, _ = S.potential_and_derivatives(-0.1, 0.0, 0.0, 0.045)
        assert psi == pytest.approx(4.5e-4)
        assert dp == pytest.approx(-0.009)

    def test_quadratic_extension_above(self):
        psi, dp, _, _ = S.potential_and_derivatives(0.7, 0.3, 0.2, 0.045)
        # phi_T = 1.2, extension branch (1-s)^2
        assert psi == pytest.approx(0.045 * 0.04)
        assert dp == pytest.approx(-2 * 0.045 * (1 - 1.2))

    def test_depends_on_sum_only(self):
        a = S.potential_and_derivatives(0.3, 0.1, 0.2, 0.045)
        b = S.potential_and_derivatives(0.6, 0.0, 0.0, 0.045)
        assert a == pytest.approx(b)


class TestMobility:
    def test_midpoint_value(self):
        assert S.ch_mobility(0.5, 50.0, 1e-6) == pytest.approx(3.125)

    def test_degenerate_ends_floored(self):
        assert S.ch_mobility(0.0, 50.0, 1e-6) == 1e-6
        assert S.ch_mobility(1.2, 50.0, 1e-6) == 1e-6


class TestSources:
    def test_zero_state(self):
        out = S.eval_sources(0, 0, 0, 0, 0, 0, 0, S.Parameters())
        assert all(v == 0.0 for v in out)

    def test_prolific_hand_value(self):
        out = S.eval_sources(0.5, 0.0, 0.0, 0.6, 0.0, 0.0, 0.0, S.Parameters())
        assert out[0] == pytest.approx(0.7475)

    def test_conserving_subsystem_random_states(self, rng):
        # prolific + hypoxic + necrotic + nutrient + ECM sources cancel
        p = S.Parameters()
        states = rng.uniform(size=(1000, 7))
        s = S.eval_sources(*(states[:, i] for i in range(7)), p)
        total = s[0] + s[1] + s[2] + s[3] + s[6]
        assert np.abs(total).max() <= 1e-12

    def test_necrotic_gain_below_threshold(self):
        p = S.Parameters()
        out = S.eval_sources(0.0, 0.5, 0.0, 0.2, 0.0, 0.0, 0.0, p)
        assert out[2] == pytest.approx(0.5)  # lambda_HN * H(0.44-0.2) * 0.5

    def test_ecm_degradation_only_when_saturated(self):
        p = S.Parameters()
        out = S.eval_sources(0.0, 0.0, 0.0, 0.0, 0.1, 0.0, 1.0, p)
        assert out[6] == pytest.approx(-0.5)  # -5 * 1.0 * 0.1, production off

    def test_taf_production_rate(self):
        p = S.Parameters()
        out = S.eval_sources(0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, p)
        assert out[5] == pytest.approx(5.0)  # 10 * (1-0) * 0.5 * H(0.5)

    def test_mde_penalizes_high_nutrient(self):
        p = S.Parameters()
        low = S.eval_sources(0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, p)[4]
        high = S.eval_sources(0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, p)[4]
        assert low > high > 0.0


def make_state(grid, **fields):
    st = S.TissueState.zeros(grid)
    for name, val in fields.items():
        getattr(st, name).values[:] = val
    return st


class TestChemicalPotential:
    def test_zero_state(self):
        g = G.Grid3D.cube(8, 2.0)
        st = make_state(g)
        mu = S.chemical_potential(st, "prolific", S.Parameters())
        assert np.abs(mu.values).max() == 0.0

    def test_uniform_midpoint_is_zero(self):
        g = G.Grid3D.cube(8, 2.0)
        st = make_state(g, prolific=0.5)
        mu = S.chemical_potential(st, "prolific", S.Parameters())
        assert np.abs(mu.values).max() <= 1e-15

    def test_chemotaxis_shift(self):
        g = G.Grid3D.cube(8, 2.0)
        st = make_state(g, nutrient=0.6)
        p = S.Parameters(chemotaxis=0.05)
        mu = S.chemical_potential(st, "prolific", p)
        assert np.allclose(mu.values, -0.03)


class TestAdvanceCH:
    def test_uniform_equilibrium_unchanged(self):
        g = G.Grid3D.cube(8, 2.0)
        p = inert_params()
        st = make_state(g, prolific=0.37, hypoxic=0.21)
        st.mu_prolific = S.chemical_potential(st, "prolific", p)
        st.mu_hypoxic = S.chemical_potential(st, "hypoxic", p)
        new_p, _, new_h, _ = S.advance_ch_pair(st, 0.025, p)
        assert np.allclose(new_p.values, 0.37, atol=1e-12)
        assert np.allclose(new_h.values, 0.21, atol=1e-12)

    def test_energy_dissipation_and_mass_conservation(self, rng):
        from vtgrowth.engine import compute_energy

        g = G.Grid3D.cube(12, 2.0)
        p = inert_params()
        st = S.TissueState.zeros(g)
        st.prolific.values[:] = smooth_noise((12,) * 3, rng)
        st.hypoxic.values[:] = smooth_noise((12,) * 3, rng)
        st.mu_prolific = S.chemical_potential(st, "prolific", p)
        st.mu_hypoxic = S.chemical_potential(st, "hypoxic", p)
        solver = SolverConfig(method="bicgstab", rel_tol=1e-12, abs_tol=1e-13)
        mass0 = st.prolific.total()
        e_prev = compute_energy(st, p)
        for _ in range(25):
            new_p, new_mu_p, new_h, new_mu_h = S.advance_ch_pair(st, 0.025, p, solver)
            st.prolific, st.mu_prolific = new_p, new_mu_p
            st.hypoxic, st.mu_hypoxic = new_h, new_mu_h
            e = compute_energy(st, p)
            assert e <= e_prev + 1e-12 * abs(e_prev)
            e_prev = e
        assert abs(st.prolific.total() - mass0) <= 1e-9

    def test_cfl_violation_raises(self):
        g = G.Grid3D.cube(8, 2.0)
        p = inert_params()
        st = make_state(g, prolific=0.5)
        st.velocity.x[:] = 100.0
        with pytest.raises(S.CFLError):
            S.advance_ch_pair(st, 0.025, p)


class TestAdvanceLocalODEs:
    def test_no_source_unchanged(self):
        g = G.Grid3D.cube(4, 1.0)
        st = make_state(g, necrotic=0.3, ecm=0.2)
        nec, ecm = S.advance_necrotic_ecm(st, 0.025, inert_params())
        assert np.array_equal(nec.values, st.necrotic.values)
        assert np.array_equal(ecm.values, st.ecm.values)

    def test_necrotic_hand_value(self):
        g = G.Grid3D.cube(4, 1.0)
        st = make_state(g, hypoxic=0.5, nutrient=0.2)
        nec, _ = S.advance_necrotic_ecm(st, 0.025, S.Parameters())
        assert np.allclose(nec.values, 0.0125)

    def test_ecm_hand_value(self):
        g = G.Grid3D.cube(4, 1.0)
        st = make_state(g, ecm=1.0, mde=0.1)
        _, ecm = S.advance_necrotic_ecm(st, 0.025, S.Parameters())
        assert np.allclose(ecm.values, 1.0 - 0.5 * 0.025)

    def test_updates_are_local(self, rng):
        g = G.Grid3D.cube(4, 1.0)
        p = S.Parameters()
        st = make_state(g)
        for f in st.phase_fields().values():
            f.values[:] = rng.uniform(size=(4,) * 3)
        nec1, ecm1 = S.advance_necrotic_ecm(st, 0.025, p)
        st.hypoxic.values[2, 2, 2] += 0.1
        st.nutrient.values[2, 2, 2] = 0.0
        nec2, ecm2 = S.advance_necrotic_ecm(st, 0.025, p)
        changed = nec1.values != nec2.values
        assert changed[2, 2, 2] or ecm1.values[2, 2, 2] != ecm2.values[2, 2, 2]
        changed_any = (nec1.values != nec2.values) | (ecm1.values != ecm2.values)
        changed_any[2, 2, 2] = False
        assert not changed_any.any()


class TestAdvanceRD:
    def test_uniform_unchanged(self):
        g = G.Grid3D.cube(8, 2.0)
        st = make_state(g, nutrient=0.6)
        sig, mde, taf = S.advance_rd(st, 0.025, inert_params())
        assert np.allclose(sig.values, 0.6, atol=1e-12)
        assert np.abs(mde.values).max() <= 1e-12
        assert np.abs(taf.values).max() <= 1e-12

    def test_mde_decay(self):
        g = G.Grid3D.cube(8, 2.0)
        p = inert_params(mde_decay_rate=1.0)
        st = make_state(g, mde=1.0)
        _, mde, _ = S.advance_rd(st, 0.025, p)
        assert np.allclose(mde.values, 0.975, atol=1e-9)

    def test_taf_production(self):
        g = G.Grid3D.cube(8, 2.0)
        st = make_state(g, hypoxic=0.5)
        p = inert_params(taf_production_rate=10.0)
        _, _, taf = S.advance_rd(st, 0.025, p)
        assert np.allclose(taf.values / 0.025, 5.0, atol=1e-8)

    def test_decay_keeps_nonnegative(self, rng):
        # explicit decay with dt*lambda <= 1 cannot cross zero
        g = G.Grid3D.cube(6, 1.0)
        p = inert_params(mde_decay_rate=1.0, taf_decay_rate=1.0)
        st = make_state(g)
        st.mde.values[:] = rng.uniform(size=(6,) * 3)
        st.taf.values[:] = rng.uniform(size=(6,) * 3)
        for _ in range(5):
            _, mde, taf = S.advance_rd(st, 0.9, p)
            st.mde, st.taf = mde, taf
            assert mde.values.min() >= -1e-12
            assert taf.values.min() >= -1e-12

    def test_exchange_source_and_diag(self):
        # uniform source raises sigma; implicit diagonal relaxes it toward
        # the vessel value instead of overshooting
        g = G.Grid3D.cube(6, 1.0)
        p = inert_params()
        st = make_state(g, nutrient=0.0)
        src = G.CellField.full(g, 10.0)
        diag = G.CellField.full(g, 10.0)
        sig, _, _ = S.advance_rd(st, 10.0, p, src, diag)
        # (1/dt + c) sigma = src  ->  relaxation toward src/c = 1, no overshoot
        assert np.allclose(sig.values, 10.0 / (0.1 + 10.0), atol=1e-10)
        assert sig.values.max() <= 1.0 + 1e-12


class TestParameters:
    def test_defaults_match_reference_table(self):
        p = S.Parameters()
        assert (p.mitosis_rate, p.mobility_prolific, p.mobility_hypoxic) == (5.0, 50.0, 25.0)
        assert (p.wall_nutrient_permeability, p.nutrient_diffusivity) == (10.0, 1.0)
        assert (p.tissue_permeability, p.wall_hydraulic_permeability) == (1e-9, 1e-7)
        assert p.well_prefactor == 0.045
        assert (p.prolific_to_hypoxic_threshold, p.hypoxic_to_prolific_threshold,
                p.hypoxic_to_necrotic_threshold) == (0.55, 0.65, 0.44)
        # unmentioned parameters default to zero
        assert (p.chemotaxis, p.haptotaxis, p.taf_decay_rate,
                p.taf_production_threshold, p.reflection) == (0, 0, 0, 0, 0)

    def test_replace(self):
        p = S.Parameters().replace(chemotaxis=0.05)
        assert p.chemotaxis == 0.05
        assert p.mitosis_rate == 5.0
