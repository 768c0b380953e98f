"""Tests for parameters, state containers and reaction terms"""

import numpy as np
import pytest

from conftest import zero_regime
from src.core.errors import ValidationError
from src.core.grid import SpatialGrid
from src.core.integrator import ConstantPolicy, StepConfig
from src.core.model import (
    ControlField,
    CostParams,
    FieldState,
    RegimeParams,
    SivParams,
    control_transfer,
    diffusion_coeffs,
    drift,
    mass_diagnostic,
    running_cost,
    terminal_cost,
)
from src.services.ensemble import simulate_ensemble


class TestParams:
    """Validation of coefficients and weights"""

    def test_defaults(self, default_params):
        first, second = default_params.regimes
        assert (first.alpha, first.e) == (0.001, 0.8)
        assert (second.alpha, second.e) == (0.002, 0.9)
        assert first.d1 == first.d2 == first.d3 == 0.01

    def test_negative_value_rejected(self):
        with pytest.raises(ValidationError) as exc:
            zero_regime(mu=-0.1)
        assert exc.value.violations[0][0] == 'mu'

    def test_fraction_above_one_rejected(self):
        with pytest.raises(ValidationError):
            zero_regime(e=1.5)

    def test_from_dict_reports_unknown_keys(self):
        with pytest.raises(ValidationError) as exc:
            RegimeParams.from_dict({'p': 0.5, 'bogus': 1.0}, 'model.regimes[0].')
        assert exc.value.violations == [('model.regimes[0].bogus', 'unknown parameter')]

    def test_at_per_path_regimes(self, default_params):
        c = default_params.at(np.array([0, 1, 0]))
        np.testing.assert_allclose(c.beta[:, 0], [0.02, 0.04, 0.02])
        assert default_params.at(1).m == 0.02

    def test_at_rejects_unknown_regime(self, default_params):
        with pytest.raises(ValidationError):
            default_params.at(2)

    def test_beta_profile_scales_transmission(self, grid8):
        profile = np.linspace(0.0, 2.0, 8)
        params = SivParams(SivParams.defaults().regimes, {'beta': profile})
        np.testing.assert_allclose(params.at(0).beta, 0.02 * profile)
        assert params.at(0).mu == 0.04

    def test_profiles_apply_to_every_regime_and_path(self):
        profile = np.array([1.0, 0.5, 0.0, 2.0])
        params = SivParams(SivParams.defaults().regimes, {'mu': profile, 'm': profile})
        c = params.at(np.array([0, 1, 1]))
        assert c.mu.shape == (3, 4)
        np.testing.assert_allclose(c.mu[0], 0.04 * profile)
        np.testing.assert_allclose(c.mu[1], 0.05 * profile)
        np.testing.assert_allclose(c.m[2], 0.02 * profile)
        np.testing.assert_allclose(c.d1, 0.01)

    def test_profiles_carried_through_copies(self):
        params = SivParams(SivParams.defaults().regimes, {'sigma': [1.0, 2.0]})
        np.testing.assert_allclose(params.with_regime(0, sigma=0.1).at(0).sigma, [0.1, 0.2])
        np.testing.assert_allclose(params.with_all(sigma=0.2).at(1).sigma, [0.2, 0.4])
        assert params.to_dict()['cell_profiles'] == {'sigma': [1.0, 2.0]}

    def test_profile_validation(self):
        with pytest.raises(ValidationError) as exc:
            SivParams(SivParams.defaults().regimes, {'d1': [1.0], 'beta': [-1.0], 'p': [2.0], 'eta': []})
        assert {k for k, _ in exc.value.violations} == {
            'model.cell_profiles.d1', 'model.cell_profiles.beta', 'model.cell_profiles.p', 'model.cell_profiles.eta'}

    def test_profile_length_checked_against_grid(self):
        params = SivParams(SivParams.defaults().regimes, {'beta': np.ones(4)})
        params.check_profiles(4)
        with pytest.raises(ValidationError) as exc:
            params.check_profiles(8)
        assert exc.value.violations[0][0] == 'model.cell_profiles.beta'

    def test_cost_weights(self):
        with pytest.raises(ValidationError) as exc:
            CostParams(tau1=0.0, a1=-1.0)
        keys = {k for k, _ in exc.value.violations}
        assert keys == {'cost.a1', 'cost.tau1'}


class TestStates:
    """FieldState and ControlField"""

    def test_uniform_and_mass(self, grid8):
        state = FieldState.uniform(grid8, 0.6, 0.1, 1.0)
        assert state.total_mass() == pytest.approx(1.7)
        np.testing.assert_allclose(state.spatial_mean(), [0.6, 0.1, 1.0])
        assert state.n_paths is None

    def test_batch_and_path(self, grid8):
        batch = FieldState.uniform(grid8, 0.6, 0.1, 1.0).batch(5)
        assert batch.n_paths == 5
        assert batch.path(slice(1, 3)).n_paths == 2
        np.testing.assert_allclose(batch.total_mass(), np.full(5, 1.7))

    def test_shape_mismatch_rejected(self, grid8):
        with pytest.raises(ValidationError):
            FieldState(np.zeros(7), np.zeros(8), np.zeros(8), grid8)

    def test_control_outside_box_rejected(self, grid8):
        with pytest.raises(ValidationError):
            ControlField.constant(grid8, 1.5, 0.0)

    def test_raw_control_may_leave_box(self, grid8):
        raw = ControlField(np.full(8, -3.0), np.full(8, 7.0), grid8, in_box=False)
        assert raw.u1.min() == -3.0


class TestDrift:
    """Reaction and diffusion terms"""

    def test_origin_regime_one(self, default_params, grid8):
        state = FieldState.uniform(grid8, 0.0, 0.0, 0.0)
        f = drift(state, ControlField.zeros(grid8), default_params, 0)
        np.testing.assert_allclose(f.f1, 2.0)
        np.testing.assert_allclose(f.f2, 0.0)
        np.testing.assert_allclose(f.f3, 2.0)

    def test_all_parameters_zero(self, grid8, rng):
        params = SivParams.single(zero_regime())
        state = FieldState(rng.uniform(size=8), rng.uniform(size=8), rng.uniform(size=8), grid8)
        f = drift(state, ControlField.zeros(grid8), params, 0)
        for values in f:
            np.testing.assert_array_equal(values, 0.0)

    def test_matches_hand_evaluation(self, default_params, cell):
        s, i, v, u1, u2 = 0.6, 0.1, 1.0, 0.2, 0.4
        r = default_params.regimes[1]
        state = FieldState.uniform(cell, s, i, v)
        f = drift(state, ControlField.constant(cell, u1, u2), default_params, 1)
        treatment = r.m * u2 * i / (1 + r.eta * i)
        expected1 = (1 - r.p) * r.b + r.alpha * i - r.mu * s - r.beta * s * i - u1 * s
        expected2 = r.beta * s * i + (1 - r.e) * r.beta * v * i - (r.mu + r.alpha) * i - treatment
        expected3 = r.p * r.b - r.mu * v - (1 - r.e) * r.beta * v * i + u1 * s + treatment
        np.testing.assert_allclose([f.f1[0], f.f2[0], f.f3[0]], [expected1, expected2, expected3], rtol=1e-12)

    def test_transfers_cancel_without_births_and_deaths(self, grid8, rng):
        params = SivParams.single(RegimeParams(p=0.5, b=0.0, beta=0.3, mu=0.0, alpha=0.2, e=0.7, sigma=0.1,
                                               m=0.4, eta=1.5, d1=0.0, d2=0.0, d3=0.0))
        state = FieldState(rng.uniform(size=8), rng.uniform(size=8), rng.uniform(size=8), grid8)
        control = ControlField(rng.uniform(size=8), rng.uniform(size=8), grid8)
        f = drift(state, control, params, 0)
        np.testing.assert_allclose(f.f1 + f.f2 + f.f3, 0.0, atol=1e-14)

    def test_total_drift_is_births_minus_deaths(self, default_params, grid8, rng):
        state = FieldState(rng.uniform(size=8), rng.uniform(size=8), rng.uniform(size=8), grid8)
        control = ControlField(rng.uniform(size=8), rng.uniform(size=8), grid8)
        f = drift(state, control, default_params, 1)
        total = grid8.integrate_values(f.f1 + f.f2 + f.f3)
        assert total == pytest.approx(5.0 - 0.05 * float(state.total_mass()), abs=1e-12)

    def test_control_transfer(self, default_params, cell):
        state = FieldState.uniform(cell, 0.5, 1.0, 0.0)
        t = control_transfer(state, ControlField.constant(cell, 0.4, 1.0), default_params, 0)
        assert t.vaccination[0] == pytest.approx(0.2)
        assert t.treatment[0] == pytest.approx(0.01 / 2.03)


class TestDiffusionCoeffs:
    """Multiplicative noise magnitudes"""

    def test_regime_one_unit_state(self, default_params, cell):
        g = diffusion_coeffs(FieldState.uniform(cell, 1.0, 1.0, 1.0), default_params, 0)
        assert g.g1[0] == pytest.approx(0.035)
        assert g.g2a[0] == pytest.approx(0.035)
        assert g.g2b[0] == pytest.approx(0.007)
        assert g.g3[0] == pytest.approx(0.007)

    def test_zero_sigma(self, cell):
        params = SivParams.single(zero_regime(b=1.0))
        g = diffusion_coeffs(FieldState.uniform(cell, 1.0, 1.0, 1.0), params, 0)
        assert all(np.all(x == 0) for x in g)

    def test_disease_free_state(self, default_params, grid8):
        g = diffusion_coeffs(FieldState.uniform(grid8, 0.7, 0.0, 0.3), default_params, 1)
        assert all(np.all(x == 0) for x in g)


class TestCosts:
    """Running and terminal cost"""

    def test_zero_state_zero_control(self, grid8, cost):
        assert running_cost(FieldState.uniform(grid8, 0, 0, 0), ControlField.zeros(grid8), cost) == 0.0

    def test_unit_state(self, grid8, cost):
        assert running_cost(FieldState.uniform(grid8, 1, 1, 0), ControlField.zeros(grid8), cost) == pytest.approx(2.0)

    def test_unit_control(self, grid8, cost):
        value = running_cost(FieldState.uniform(grid8, 0, 0, 0), ControlField.constant(grid8, 1, 1), cost)
        assert value == pytest.approx(0.5)

    def test_lyapunov_weighting(self, grid8, cost):
        value = running_cost(FieldState.uniform(grid8, 0, 0, 0), ControlField.constant(grid8, 1, 1), cost, 1.0)
        assert value == pytest.approx(1.0)

    def test_convex_in_control(self, grid8, cost, rng):
        state = FieldState(rng.uniform(size=8), rng.uniform(size=8), rng.uniform(size=8), grid8)
        for _ in range(20):
            a = ControlField(rng.uniform(size=8), rng.uniform(size=8), grid8)
            b = ControlField(rng.uniform(size=8), rng.uniform(size=8), grid8)
            for theta in (0.1, 0.5, 0.9):
                mixed = ControlField(theta * a.u1 + (1 - theta) * b.u1, theta * a.u2 + (1 - theta) * b.u2, grid8)
                bound = theta * running_cost(state, a, cost) + (1 - theta) * running_cost(state, b, cost)
                assert running_cost(state, mixed, cost) <= bound + 1e-12

    def test_terminal_cost(self, cell):
        assert terminal_cost(FieldState.uniform(cell, 0, 0.3, 0)) == pytest.approx(0.3)
        grid = SpatialGrid(1000)
        ramp = FieldState(np.zeros(1000), grid.nodes, np.zeros(1000), grid)
        assert terminal_cost(ramp) == pytest.approx(0.5, abs=1e-6)


class TestMassDiagnostic:
    """E int (S + I + V) against the initial mass"""

    def test_initial_time_has_zero_deviation(self, grid8):
        state = FieldState.uniform(grid8, 0.6, 0.1, 1.0).batch(10)
        diag = mass_diagnostic(state, 1.7)
        assert diag.deviation == pytest.approx(0.0, abs=1e-15)
        assert diag.stderr == pytest.approx(0.0, abs=1e-15)

    def test_sequence_of_states(self, grid8):
        states = [FieldState.uniform(grid8, 0.5, 0.0, x) for x in (0.0, 1.0)]
        diag = mass_diagnostic(states, 1.0)
        assert diag.mean_mass == pytest.approx(1.0)
        assert diag.to_dict()['deviation'] == pytest.approx(0.0)

    def test_empty_sequence_rejected(self):
        with pytest.raises(ValidationError):
            mass_diagnostic([], 1.0)

    def test_mass_constant_when_births_balance_deaths(self, single_chain, cell):
        initial = FieldState.uniform(cell, 0.6, 0.1, 1.0)
        reference = float(initial.total_mass())
        regime = SivParams.defaults().regimes[0]
        params = SivParams.single(regime.replace(b=regime.mu * reference, sigma=0.0))
        cfg = StepConfig(dt=0.01, t_final=10.0, rng_seed=2)
        result = simulate_ensemble(initial, ConstantPolicy(0.3, 0.5), params, single_chain, cfg, 4,
                                   record_steps=list(range(0, 1001, 100)))
        assert result.clamp_counts.sum() == 0
        for k in range(len(result.record_steps)):
            assert abs(mass_diagnostic(result.state_at(k), reference).deviation) < 1e-6

    def test_mass_decays_at_death_rate_without_births(self, single_chain, cell):
        initial = FieldState.uniform(cell, 0.6, 0.1, 1.0)
        reference = float(initial.total_mass())
        regime = SivParams.defaults().regimes[0].replace(b=0.0)
        cfg = StepConfig(dt=0.01, t_final=10.0, rng_seed=2)
        result = simulate_ensemble(initial, ConstantPolicy(0.2, 0.2), SivParams.single(regime), single_chain, cfg,
                                   50, record_steps=list(range(0, 1001, 250)))
        for k, t in enumerate(result.times):
            diag = mass_diagnostic(result.state_at(k), reference)
            expected = reference * np.exp(-regime.mu * t)
            assert abs(diag.mean_mass - expected) <= reference * regime.mu ** 2 * t * cfg.dt + 4 * diag.stderr + 1e-12
