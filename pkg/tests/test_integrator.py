"""Tests for Milstein stepping, noise streams, trajectories and ensembles"""

import numpy as np
import pytest

from conftest import zero_regime
from src.core.errors import IntegrationBlowupError, ValidationError
from src.core.grid import SpatialGrid
from src.core.integrator import (
    CLAMP_WARN_FRACTION,
    ClampCounter,
    ConstantPolicy,
    NoiseDraws,
    OpenLoopPolicy,
    StepConfig,
    TrajectoryRecord,
    milstein_state_step,
    path_streams,
    simulate_path,
    step_arrays,
    susceptible_update,
)
from src.core.model import ControlField, FieldState, SivParams, drift
from src.services.ensemble import simulate_ensemble


def oracle_step(s, i, v, c, dt, z, scheme):
    """Update lines written out term by term for a single cell"""
    z1, z2, z3, z4 = z
    w = 1.0 - c.e
    root = np.sqrt(dt)
    f1 = (1 - c.p) * c.b + c.alpha * i - c.mu * s - c.beta * s * i
    f2 = c.beta * s * i + w * c.beta * v * i - (c.mu + c.alpha) * i
    f3 = c.p * c.b - c.mu * v - w * c.beta * v * i
    if scheme == 'literal':
        corr_s = -0.5 * c.sigma ** 2 * s * i ** 2
        corr_i4 = 0.5 * c.sigma ** 2 * v ** 2 * i
        corr_v = -0.5 * w ** 2 * c.sigma ** 2 * v * i ** 2
    else:
        corr_s = 0.5 * c.sigma ** 2 * s * i ** 2
        corr_i4 = 0.5 * w ** 2 * c.sigma ** 2 * v ** 2 * i
        corr_v = 0.5 * w ** 2 * c.sigma ** 2 * v * i ** 2
    s_new = s + f1 * dt - c.sigma * s * i * root * z1 + corr_s * (z1 ** 2 - 1) * dt
    i_new = (i + f2 * dt + c.sigma * s * i * root * z2 + w * c.sigma * v * i * root * z4
             + 0.5 * c.sigma ** 2 * s ** 2 * i * (z2 ** 2 - 1) * dt + corr_i4 * (z4 ** 2 - 1) * dt)
    v_new = v + f3 * dt - w * c.sigma * v * i * root * z3 + corr_v * (z3 ** 2 - 1) * dt
    return s_new, i_new, v_new


def zero_control(shape):
    return np.zeros(shape), np.zeros(shape)


class TestMilsteinStep:
    """Single-step update lines"""

    def test_unit_draws_match_oracle(self, default_params, cell):
        c = default_params.at(0)
        s, i, v = (np.array([x]) for x in (0.6, 0.1, 1.0))
        zeta = np.ones((4, 1))
        u1, u2 = zero_control(1)
        got = step_arrays(s, i, v, u1, u2, c, cell, 0.01, zeta, clamp_negative=False)[:3]
        expected = oracle_step(0.6, 0.1, 1.0, c, 0.01, (1.0, 1.0, 1.0, 1.0), 'milstein')
        np.testing.assert_allclose([x[0] for x in got], expected, rtol=0, atol=1e-14)

    @pytest.mark.parametrize('scheme', ['milstein', 'literal'])
    def test_random_inputs_match_oracle(self, default_params, cell, rng, scheme):
        c = default_params.at(1)
        s, i, v = (rng.uniform(0.0, 2.0, size=(100, 1)) for _ in range(3))
        zeta = rng.standard_normal((100, 4, 1))
        u1, u2 = zero_control((100, 1))
        got = step_arrays(s, i, v, u1, u2, c, cell, 0.01, zeta, scheme, clamp_negative=False)[:3]
        expected = oracle_step(s, i, v, c, 0.01, [zeta[:, k] for k in range(4)], scheme)
        for actual, wanted in zip(got, expected):
            np.testing.assert_allclose(actual, wanted, rtol=0, atol=1e-14)

    def test_zero_sigma_is_euler_step(self, cell, rng):
        params = SivParams.single(zero_regime(p=0.3, b=2.0, beta=0.5, mu=0.1, alpha=0.05, e=0.4))
        state = FieldState.uniform(cell, 0.6, 0.1, 1.0)
        control = ControlField.constant(cell, 0.2, 0.3)
        f = drift(state, control, params, 0)
        nxt = milstein_state_step(state, control, params, 0, 0.01, rng.standard_normal((4, 1)))
        np.testing.assert_allclose(nxt.s, state.s + 0.01 * f.f1, rtol=1e-14)
        np.testing.assert_allclose(nxt.i, state.i + 0.01 * f.f2, rtol=1e-14)
        np.testing.assert_allclose(nxt.v, state.v + 0.01 * f.f3, rtol=1e-14)
        assert nxt.time == pytest.approx(0.01)

    def test_all_parameters_zero_leave_state_unchanged(self, grid8, rng):
        params = SivParams.single(zero_regime())
        state = FieldState(rng.uniform(size=8), rng.uniform(size=8), rng.uniform(size=8), grid8)
        nxt = milstein_state_step(state, ControlField.zeros(grid8), params, 0, 0.01, rng.standard_normal((4, 8)))
        np.testing.assert_array_equal(nxt.stack(), state.stack())

    def test_literal_scheme_flips_susceptible_correction(self, default_params, cell, rng):
        c = default_params.at(0)
        s, i, v = (rng.uniform(0.5, 1.5, size=(20, 1)) for _ in range(3))
        zeta = rng.standard_normal((20, 4, 1))
        u1, u2 = zero_control((20, 1))
        consistent = step_arrays(s, i, v, u1, u2, c, cell, 0.01, zeta, 'milstein', False)[0]
        literal = step_arrays(s, i, v, u1, u2, c, cell, 0.01, zeta, 'literal', False)[0]
        expected = -c.sigma ** 2 * s * i ** 2 * (zeta[:, 0] ** 2 - 1) * 0.01
        np.testing.assert_allclose(literal - consistent, expected, atol=1e-15)

    def test_clamping_counts_negatives(self, cell):
        c = SivParams.single(zero_regime()).at(0)
        s, i, v = np.array([1.0]), np.array([0.0]), np.array([0.0])
        zeta = np.zeros((4, 1))
        clamped = step_arrays(s, i, v, np.array([1.0]), np.array([0.0]), c, cell, 2.0, zeta)
        assert clamped[0][0] == 0.0
        assert clamped[2][0] == pytest.approx(2.0)
        assert int(clamped[3]) == 1
        raw = step_arrays(s, i, v, np.array([1.0]), np.array([0.0]), c, cell, 2.0, zeta, clamp_negative=False)
        assert raw[0][0] == pytest.approx(-1.0)

    def test_counter_accumulates(self, cell):
        params = SivParams.single(zero_regime())
        state = FieldState.uniform(cell, 1.0, 0.0, 0.0)
        counter = ClampCounter()
        milstein_state_step(state, ControlField.constant(cell, 1.0, 0.0), params, 0, 2.0,
                            np.zeros((4, 1)), counter=counter)
        assert counter.count == 1

    def test_blowup_names_component_and_term(self, default_params, cell):
        huge = np.array([1e308])
        u1, u2 = zero_control(1)
        with np.errstate(all='ignore'):
            with pytest.raises(IntegrationBlowupError) as exc:
                step_arrays(huge, huge, huge, u1, u2, default_params.at(0), cell, 0.01, np.zeros((4, 1)))
        assert exc.value.component == 'S'
        assert exc.value.term == 'drift'
        assert exc.value.cell == 0


class TestStepConfig:
    """Step sizes and stability"""

    def test_steps_and_times(self, short_steps):
        assert short_steps.n_steps == 50
        assert short_steps.times[-1] == pytest.approx(0.5)
        assert short_steps.step_index(0.25) == 25

    def test_horizon_must_be_multiple_of_dt(self):
        with pytest.raises(ValidationError) as exc:
            StepConfig(dt=0.3, t_final=1.0)
        assert exc.value.violations[0][0] == 'stepping.t_final'

    def test_unknown_scheme(self):
        with pytest.raises(ValidationError) as exc:
            StepConfig(dt=0.1, t_final=1.0, scheme='euler')
        assert exc.value.violations[0][0] == 'stepping.scheme'

    def test_stability_bound_quoted(self):
        cfg = StepConfig(dt=0.01, t_final=1.0)
        with pytest.raises(ValidationError) as exc:
            cfg.check_stability(SpatialGrid(100), 0.01)
        key, message = exc.value.violations[0]
        assert key == 'stepping.dt'
        assert '0.005' in message

    def test_replace_revalidates(self, short_steps):
        assert short_steps.replace(t_final=1.0).n_steps == 100
        with pytest.raises(ValidationError):
            short_steps.replace(dt=-1.0)


class TestNoiseDraws:
    """Per-path generators"""

    def test_same_path_same_draws(self):
        draws = NoiseDraws(5, 10, 3)
        np.testing.assert_array_equal(draws.draw(2), draws.draw(2))
        assert draws.draw(2).shape == (10, 4, 3)

    def test_paths_and_seeds_differ(self):
        assert not np.array_equal(NoiseDraws(5, 10, 3).draw(0), NoiseDraws(5, 10, 3).draw(1))
        assert not np.array_equal(NoiseDraws(5, 10, 3).draw(0), NoiseDraws(6, 10, 3).draw(0))

    def test_shared_zeta_repeats_one_draw(self):
        zeta = NoiseDraws(1, 4, 5, shared_zeta=True).draw(0)
        for k in range(1, 4):
            np.testing.assert_array_equal(zeta[:, k], zeta[:, 0])

    def test_batch_follows_index_order(self):
        draws = NoiseDraws(9, 3, 2)
        batch = draws.draw_batch([4, 1])
        np.testing.assert_array_equal(batch[0], draws.draw(4))
        np.testing.assert_array_equal(batch[1], draws.draw(1))

    def test_streams_are_independent(self):
        streams = path_streams(0, 0)
        assert streams.regime.standard_normal() != streams.noise.standard_normal()


class TestSimulatePath:
    """Whole trajectories"""

    def test_same_seed_same_path(self, default_params, default_chain, grid8, short_steps):
        initial = FieldState.uniform(grid8, 0.6, 0.1, 1.0)
        a = simulate_path(initial, ConstantPolicy(), default_params, default_chain, short_steps)
        b = simulate_path(initial, ConstantPolicy(), default_params, default_chain, short_steps)
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.regimes, b.regimes)

    def test_seed_changes_path(self, default_params, default_chain, grid8, short_steps):
        initial = FieldState.uniform(grid8, 0.6, 0.1, 1.0)
        a = simulate_path(initial, ConstantPolicy(), default_params, default_chain, short_steps)
        b = simulate_path(initial, ConstantPolicy(), default_params, default_chain, short_steps.replace(rng_seed=4))
        assert not np.array_equal(a.states, b.states)

    def test_diffusion_alone_conserves_mass(self, single_chain, rng):
        grid = SpatialGrid(16)
        params = SivParams.single(zero_regime(d1=0.01, d2=0.01, d3=0.01))
        initial = FieldState(rng.uniform(size=16), rng.uniform(size=16), rng.uniform(size=16), grid)
        cfg = StepConfig(dt=0.01, t_final=1.0)
        record = simulate_path(initial, ConstantPolicy(), params, single_chain, cfg)
        masses = grid.integrate_values(record.states)
        np.testing.assert_allclose(masses, np.broadcast_to(masses[0], masses.shape), rtol=0, atol=1e-12)
        assert record.states[-1, 0].std() < initial.s.std()

    def test_unstable_step_rejected(self, default_params, default_chain):
        initial = FieldState.uniform(SpatialGrid(100), 0.6, 0.1, 1.0)
        with pytest.raises(ValidationError):
            simulate_path(initial, ConstantPolicy(), default_params, default_chain, StepConfig(dt=0.01, t_final=0.1))

    def test_controls_and_noise_recorded(self, default_params, default_chain, grid8, short_steps):
        record = simulate_path(FieldState.uniform(grid8, 0.6, 0.1, 1.0), ConstantPolicy(0.3, 0.7),
                               default_params, default_chain, short_steps)
        assert record.controls.shape == (50, 2, 8)
        np.testing.assert_array_equal(record.controls[:, 1], 0.7)
        assert record.noise_draws.shape == (50, 4, 8)
        np.testing.assert_array_equal(record.noise_draws, NoiseDraws(3, 50, 8).draw(0))

    def test_open_loop_schedule(self, regime_one, single_chain, cell):
        cfg = StepConfig(dt=0.1, t_final=0.5)
        schedule = np.zeros((5, 2, 1))
        schedule[:, 0, 0] = np.linspace(0.0, 0.4, 5)
        record = simulate_path(FieldState.uniform(cell, 0.6, 0.1, 1.0), OpenLoopPolicy(schedule, 0.1, cell),
                               regime_one, single_chain, cfg)
        np.testing.assert_allclose(record.controls[:, 0, 0], schedule[:, 0, 0])

    def test_open_loop_shape_checked(self, cell):
        with pytest.raises(ValidationError):
            OpenLoopPolicy(np.zeros((5, 3, 1)), 0.1, cell)


class TestTrajectoryRecord:
    """Exports"""

    def test_binary_round_trip(self, default_params, default_chain, grid8, short_steps, tmp_path):
        record = simulate_path(FieldState.uniform(grid8, 0.6, 0.1, 1.0), ConstantPolicy(),
                               default_params, default_chain, short_steps)
        path = tmp_path / 'trajectory-0.bin'
        record.write_binary(path)
        loaded = TrajectoryRecord.read_binary(path)
        np.testing.assert_array_equal(loaded.times, record.times)
        np.testing.assert_array_equal(loaded.states, record.states)
        np.testing.assert_array_equal(loaded.regimes, record.regimes)

    def test_bad_magic_rejected(self):
        with pytest.raises(ValidationError):
            TrajectoryRecord.from_bytes(b'XXXX' + bytes(20))

    def test_rows(self, regime_one, single_chain, cell):
        record = simulate_path(FieldState.uniform(cell, 0.6, 0.1, 1.0), ConstantPolicy(),
                               regime_one, single_chain, StepConfig(dt=0.1, t_final=0.3))
        rows = record.to_rows()
        assert len(rows) == 4
        assert rows[0] == (0.0, 0.5, 0.6, 0.1, 1.0, 0)


class TestEnsemble:
    """Batches and threads"""

    def test_thread_and_batch_invariance(self, default_params, default_chain, grid8, short_steps):
        initial = FieldState.uniform(grid8, 0.6, 0.1, 1.0)
        serial = simulate_ensemble(initial, ConstantPolicy(0.2, 0.3), default_params, default_chain, short_steps, 7)
        threaded = simulate_ensemble(initial, ConstantPolicy(0.2, 0.3), default_params, default_chain, short_steps, 7,
                                     threads=3, batch_size=2)
        np.testing.assert_array_equal(serial.states, threaded.states)
        np.testing.assert_array_equal(serial.regimes, threaded.regimes)
        np.testing.assert_array_equal(threaded.path_indices, np.arange(7))

    def test_path_matches_single_simulation(self, default_params, default_chain, grid8, short_steps):
        initial = FieldState.uniform(grid8, 0.6, 0.1, 1.0)
        ensemble = simulate_ensemble(initial, ConstantPolicy(), default_params, default_chain, short_steps, 4)
        single = simulate_path(initial, ConstantPolicy(), default_params, default_chain, short_steps, path_index=3)
        np.testing.assert_array_equal(ensemble.states[3], single.states)

    def test_record_steps_subset(self, default_params, default_chain, grid8, short_steps):
        initial = FieldState.uniform(grid8, 0.6, 0.1, 1.0)
        result = simulate_ensemble(initial, ConstantPolicy(), default_params, default_chain, short_steps, 3,
                                   record_steps=[0, 50])
        assert result.states.shape == (3, 2, 3, 8)
        assert result.regimes.shape == (3, 51)
        assert result.state_at_time(0.5).n_paths == 3

    def test_regimes_switch_in_long_runs(self, default_params, default_chain, cell):
        cfg = StepConfig(dt=0.01, t_final=5.0, rng_seed=11)
        result = simulate_ensemble(FieldState.uniform(cell, 0.6, 0.1, 1.0), ConstantPolicy(), default_params,
                                   default_chain, cfg, 20, record_steps=[0])
        assert set(np.unique(result.regimes)) == {0, 1}

    @pytest.mark.parametrize('level', [0.0, 1.0])
    def test_clamping_is_rare_at_default_coefficients(self, default_params, default_chain, grid8, level):
        cfg = StepConfig(dt=0.01, t_final=10.0, rng_seed=5)
        result = simulate_ensemble(FieldState.uniform(grid8, 0.6, 0.1, 1.0), ConstantPolicy(level, level),
                                   default_params, default_chain, cfg, 20, record_steps=[0])
        assert result.clamp_fraction < CLAMP_WARN_FRACTION


@pytest.mark.slow
class TestStrongOrder:
    """Self-convergence of the susceptible line with I frozen"""

    def test_order_one(self, default_params, cell):
        c = default_params.at(0)._replace(sigma=1.0)
        n_paths, base, levels, horizon = 1000, 16, 5, 1.0
        finest = base * 2 ** (levels - 1)
        rng = np.random.default_rng(77)
        dw = rng.standard_normal((n_paths, finest, 1)) * np.sqrt(horizon / finest)
        i = np.full((n_paths, 1), 0.5)
        v = np.ones((n_paths, 1))
        u1, u2 = zero_control((n_paths, 1))

        finals = []
        for level in range(levels):
            n = base * 2 ** level
            dt = horizon / n
            increments = dw.reshape(n_paths, n, finest // n, 1).sum(axis=2)
            s = np.full((n_paths, 1), 0.6)
            for k in range(n):
                s = susceptible_update(s, i, v, u1, u2, c, cell, dt, increments[:, k] / np.sqrt(dt))
            finals.append(s)

        errors = [np.mean(np.abs(finals[k] - finals[k + 1])) for k in range(levels - 1)]
        slope = np.polyfit(np.log2([horizon / (base * 2 ** k) for k in range(levels - 1)]), np.log2(errors), 1)[0]
        assert slope == pytest.approx(1.0, abs=0.15)
