"""Tests for the value basis, behavior data and off-policy learning"""

import numpy as np
import pytest

from conftest import zero_regime
from src.core.errors import ExcitationError, ValidationError
from src.core.integrator import ConstantPolicy, StepConfig
from src.core.model import CostParams, FieldState, SivParams
from src.services.control import SweepConfig, evaluate_constant_control, forward_backward_sweep
from src.services.irl import (
    BasisSpec,
    IrlConfig,
    LearnedPolicy,
    MONOMIALS,
    UniformBehaviorPolicy,
    ValueApprox,
    collect_transitions,
    irl_policy_iteration,
    probe_controls,
    probe_states,
    solve_integral_le,
)


@pytest.fixture
def irl_steps():
    return StepConfig(dt=0.05, t_final=1.0, rng_seed=4)


def behavior_dataset(params, chain, steps, grid, cost, n_paths=100, stride=None):
    return collect_transitions(UniformBehaviorPolicy(0.1), params, chain, steps, n_paths, grid, cost, 0.1, stride)


class TestBasis:
    """Hats in time times monomials"""

    def test_hats_partition_unity(self, rng):
        basis = BasisSpec.uniform(3.0, 7)
        t = rng.uniform(0.0, 3.0, size=500)
        np.testing.assert_allclose(basis.hats(t).sum(axis=-1), 1.0, atol=1e-14)
        assert np.all(basis.hats(t) >= 0)

    def test_hats_are_one_hot_at_knots(self):
        basis = BasisSpec.uniform(1.0, 5)
        np.testing.assert_allclose(basis.hats(basis.time_knots), np.eye(5), atol=1e-15)

    def test_knots_validated(self):
        with pytest.raises(ValidationError):
            BasisSpec(np.array([0.0, 0.5, 0.5, 1.0]))
        with pytest.raises(ValidationError):
            BasisSpec(np.array([0.1, 1.0]))

    def test_feature_layout(self):
        basis = BasisSpec.uniform(1.0, 3)
        features = basis.features(np.array([[2.0, 3.0, 5.0]]), np.array([0.0]))
        assert features.shape == (1, 30)
        np.testing.assert_allclose(features[0, :10], [1, 2, 3, 5, 4, 9, 25, 6, 10, 15])
        np.testing.assert_array_equal(features[0, 10:], 0.0)
        assert len(basis.names()) == 30

    def test_gradient_matches_finite_differences(self, rng):
        basis = BasisSpec.uniform(2.0, 4)
        value = ValueApprox(rng.normal(size=(4, len(MONOMIALS))), basis)
        h = 1e-6
        for _ in range(50):
            x = rng.uniform(0.0, 2.0, size=3)
            t = rng.uniform(0.0, 2.0)
            grad = value.gradient(x, t)
            for a in range(3):
                up, down = x.copy(), x.copy()
                up[a] += h
                down[a] -= h
                numeric = (value(up, t) - value(down, t)) / (2 * h)
                assert grad[a] == pytest.approx(numeric, abs=1e-6)

    def test_value_shape_checked(self):
        with pytest.raises(ValidationError):
            ValueApprox(np.zeros((3, 4)), BasisSpec.uniform(1.0, 3))

    def test_probe_states(self):
        box = ((0.0, 1.0), (0.5, 1.5), (0.0, 3.0))
        probe = probe_states(40, 9, 2.0, 5, box=box)
        assert probe.states.shape == (40, 3)
        assert probe.states[:, 1].min() >= 0.5 and probe.states[:, 1].max() <= 1.5
        np.testing.assert_allclose(probe.times, [0.0, 0.5, 1.0, 1.5, 2.0])
        np.testing.assert_array_equal(probe.states, probe_states(40, 9, 2.0, 5, box=box).states)
        x, t = probe.grid()
        assert x.shape == (5, 40, 3) and t.shape == (5, 40)


class TestPolicies:
    """Behavior and learned policies"""

    def test_unbound_behavior_returns_centre(self, grid8):
        control = UniformBehaviorPolicy(0.1, ((0.0, 0.4), (0.2, 1.0)))(FieldState.uniform(grid8, 1, 1, 1), 0.0, 0)
        np.testing.assert_allclose(control.u1, 0.2)
        np.testing.assert_allclose(control.u2, 0.6)

    def test_behavior_redraws_per_window(self, grid8):
        policy = UniformBehaviorPolicy(0.1).for_paths([0, 1, 2], 5)
        state = FieldState.uniform(grid8, 1, 1, 1).batch(3)
        first = policy(state, 0.0, np.zeros(3, dtype=int))
        same = policy(state, 0.05, np.zeros(3, dtype=int))
        later = policy(state, 0.1, np.zeros(3, dtype=int))
        np.testing.assert_array_equal(first.u1, same.u1)
        assert not np.array_equal(first.u1, later.u1)
        assert np.all(first.u1 == first.u1[:, :1])
        assert first.u1.min() >= 0.0 and first.u1.max() <= 1.0

    def test_zero_learned_policy(self, default_params, cost, grid8):
        policy = LearnedPolicy.zero(BasisSpec.uniform(1.0, 3), default_params, cost)
        control = policy(FieldState.uniform(grid8, 0.6, 0.1, 1.0).batch(2), 0.3, np.zeros(2, dtype=int))
        np.testing.assert_array_equal(control.u1, 0.0)
        np.testing.assert_array_equal(control.u2, 0.0)

    def test_policy_from_linear_value(self, default_params, cost, cell):
        basis = BasisSpec.uniform(1.0, 3)
        coeffs = np.zeros((3, len(MONOMIALS)))
        coeffs[:, 1] = 2.0
        policy = LearnedPolicy.from_value(ValueApprox(coeffs, basis), default_params, cost)
        control = policy(FieldState.uniform(cell, 0.3, 0.1, 1.0), 0.5, 0)
        assert control.u1[0] == pytest.approx(0.6)
        assert control.u2[0] == 0.0

    def test_learned_policy_projects(self, default_params, cost, cell):
        basis = BasisSpec.uniform(1.0, 2)
        gradients = np.zeros((2, 2, 4))
        gradients[0, :, 0] = 100.0
        gradients[1, :, 0] = -100.0
        control = LearnedPolicy(gradients, basis, default_params, cost)(FieldState.uniform(cell, 1.0, 1.0, 1.0), 0.0, 0)
        assert control.u1[0] == 1.0
        assert control.u2[0] == 0.0

    def test_probe_controls_of_constant_policy(self, cell):
        probe = probe_states(5, 0, 1.0, 3)
        out = probe_controls(ConstantPolicy(0.25, 0.75), probe, cell)
        assert out.shape == (3, 5, 2)
        np.testing.assert_allclose(out[..., 0], 0.25)
        np.testing.assert_allclose(out[..., 1], 0.75)


class TestTransitions:
    """Windowed behavior data"""

    def test_window_count(self, default_params, default_chain, cell, cost, irl_steps):
        data = behavior_dataset(default_params, default_chain, irl_steps, cell, cost, n_paths=3)
        assert data.window == 2
        assert data.n_windows == 30
        overlapping = behavior_dataset(default_params, default_chain, irl_steps, cell, cost, n_paths=3, stride=1)
        assert overlapping.n_windows == 3 * 19

    def test_window_sums(self, default_params, default_chain, cell, cost, irl_steps):
        data = behavior_dataset(default_params, default_chain, irl_steps, cell, cost, n_paths=2)
        per_step = np.arange(40.0).reshape(2, 20)
        sums = data.window_sums(per_step)
        assert sums[0] == pytest.approx((0 + 1) * 0.05)
        assert sums[10] == pytest.approx((20 + 21) * 0.05)

    def test_deterministic(self, default_params, default_chain, cell, cost, irl_steps):
        a = behavior_dataset(default_params, default_chain, irl_steps, cell, cost, n_paths=4)
        b = behavior_dataset(default_params, default_chain, irl_steps, cell, cost, n_paths=4)
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.controls, b.controls)

    def test_initial_states_drawn_in_box(self, default_params, default_chain, cell, cost, irl_steps):
        data = collect_transitions(ConstantPolicy(), default_params, default_chain, irl_steps, 20, cell, cost, 0.1,
                                   initial_box=((0.0, 0.1), (1.0, 1.1), (2.0, 2.1)))
        first = data.states[:, 0, :, 0]
        assert np.all((first >= [0.0, 1.0, 2.0]) & (first <= [0.1, 1.1, 2.1]))

    def test_delta_must_be_multiple_of_dt(self, default_params, default_chain, cell, cost, irl_steps):
        with pytest.raises(ValidationError):
            collect_transitions(ConstantPolicy(), default_params, default_chain, irl_steps, 2, cell, cost, 0.07)


class TestIntegralLe:
    """Least-squares policy evaluation and improvement"""

    def test_costless_problem_has_zero_value(self, default_params, default_chain, cell, irl_steps):
        cost = CostParams(a1=0.0, a2=0.0, terminal_weight=0.0)
        data = behavior_dataset(default_params, default_chain, irl_steps, cell, cost)
        value, improved, diagnostics = solve_integral_le(data, ConstantPolicy(), BasisSpec.uniform(1.0, 2),
                                                         cost, default_params)
        np.testing.assert_array_equal(value.coeffs, 0.0)
        np.testing.assert_array_equal(improved.gradients, 0.0)
        assert diagnostics.mode == 'off-policy'
        assert diagnostics.unknowns == 20 + 16

    def test_on_policy_data_uses_evaluation_mode(self, default_params, default_chain, cell, cost, irl_steps):
        data = collect_transitions(ConstantPolicy(0.5, 0.5), default_params, default_chain, irl_steps, 100, cell,
                                   cost, 0.1)
        value, improved, diagnostics = solve_integral_le(data, ConstantPolicy(0.5, 0.5),
                                                         BasisSpec.uniform(1.0, 2), cost, default_params)
        assert diagnostics.mode == 'evaluation'
        assert diagnostics.unknowns == 20
        assert diagnostics.terminal_error < 0.05

    def test_frozen_data_lacks_excitation(self, single_chain, cell, cost, irl_steps):
        params = SivParams.single(zero_regime())
        data = collect_transitions(ConstantPolicy(), params, single_chain, irl_steps, 10, cell, cost, 0.1,
                                   initial=FieldState.uniform(cell, 0.6, 0.1, 1.0))
        with pytest.raises(ExcitationError) as exc:
            solve_integral_le(data, ConstantPolicy(), BasisSpec.uniform(1.0, 2), cost, params)
        assert exc.value.rank < exc.value.size
        assert exc.value.directions

    def test_horizon_mismatch_rejected(self, default_params, default_chain, cell, cost, irl_steps):
        data = behavior_dataset(default_params, default_chain, irl_steps, cell, cost, n_paths=5)
        with pytest.raises(ValidationError):
            solve_integral_le(data, ConstantPolicy(), BasisSpec.uniform(2.0, 2), cost, default_params)

    def test_on_policy_value_matches_closed_form(self, single_chain, cell, irl_steps):
        params = SivParams.single(zero_regime())
        cost = CostParams(a1=1.0, a2=2.0)
        data = collect_transitions(ConstantPolicy(), params, single_chain, irl_steps, 50, cell, cost, 0.1)
        value, _, diagnostics = solve_integral_le(data, ConstantPolicy(), BasisSpec.uniform(1.0, 3), cost, params)
        assert diagnostics.mode == 'evaluation'
        x, t = probe_states(30, 2, 1.0, 5).grid()
        expected = (x[..., 0] + 2.0 * x[..., 1]) * (1.0 - t) + x[..., 1]
        np.testing.assert_allclose(value(x, t), expected, atol=1e-3)

    def test_off_policy_fit_matches_on_policy_evaluation(self, single_chain, cell, irl_steps):
        # Transfers only: the value of u = 0 and its off-policy correction are exactly representable
        params = SivParams.single(zero_regime(m=0.5))
        cost = CostParams(a1=1.0, a2=2.0)
        basis = BasisSpec.uniform(1.0, 3)
        off_data = behavior_dataset(params, single_chain, irl_steps, cell, cost, n_paths=50)
        on_data = collect_transitions(ConstantPolicy(), params, single_chain, irl_steps, 50, cell, cost, 0.1)
        off_value, _, off_diag = solve_integral_le(off_data, ConstantPolicy(), basis, cost, params)
        on_value, _, on_diag = solve_integral_le(on_data, ConstantPolicy(), basis, cost, params)
        assert (off_diag.mode, on_diag.mode) == ('off-policy', 'evaluation')
        x, t = probe_states(30, 2, 1.0, 5).grid()
        expected = (x[..., 0] + 2.0 * x[..., 1]) * (1.0 - t) + x[..., 1]
        np.testing.assert_allclose(off_value(x, t), expected, atol=1e-3)
        np.testing.assert_allclose(off_value(x, t), on_value(x, t), atol=2e-3)


class TestPolicyIteration:
    """Outer loop"""

    def test_single_iteration(self, default_params, default_chain, cell, cost, irl_steps):
        cfg = IrlConfig(delta=0.1, i_max=1, n_paths=100, n_knots=2, n_probe=10, probe_times=3, eval_paths=4)
        result = irl_policy_iteration(cfg, default_params, default_chain, cost, irl_steps,
                                      FieldState.uniform(cell, 0.6, 0.1, 1.0))
        assert len(result.history) == 1
        assert result.final.iteration == 1
        assert len(result.final.to_row()) == 4
        assert np.isfinite(result.final.objective)
        assert result.is_monotone()
        assert result.to_dict()['iterations'][0]['diagnostics']['mode'] == 'off-policy'

    def test_costless_problem_is_a_fixed_point(self, default_params, default_chain, cell, irl_steps):
        cost = CostParams(a1=0.0, a2=0.0, terminal_weight=0.0)
        cfg = IrlConfig(delta=0.1, i_max=3, n_paths=100, n_knots=2, n_probe=10, probe_times=3, eval_paths=4)
        result = irl_policy_iteration(cfg, default_params, default_chain, cost, irl_steps,
                                      FieldState.uniform(cell, 0.6, 0.1, 1.0))
        assert [it.iteration for it in result.history] == [1, 2, 3]
        for it in result.history:
            np.testing.assert_array_equal(it.value.coeffs, 0.0)
            assert it.policy_change == 0.0
            assert it.mean_probe_value == 0.0
        assert result.is_monotone()

    def test_policies_stay_in_box_and_anchor_terminal_value(self, default_params, default_chain, cell, cost,
                                                            irl_steps):
        cfg = IrlConfig(delta=0.1, i_max=2, n_paths=100, n_knots=2, n_probe=10, probe_times=3, eval_paths=4,
                        u1_bounds=(0.1, 0.4), u2_bounds=(0.2, 0.3))
        result = irl_policy_iteration(cfg, default_params, default_chain, cost, irl_steps,
                                      FieldState.uniform(cell, 0.6, 0.1, 1.0))
        assert len(result.history) == 2
        for it in result.history:
            controls = probe_controls(it.policy, result.probe, cell)
            assert controls[..., 0].min() >= 0.1 and controls[..., 0].max() <= 0.4
            assert controls[..., 1].min() >= 0.2 and controls[..., 1].max() <= 0.3
            assert it.diagnostics.terminal_error < 0.05
            assert np.isfinite(it.objective)

    def test_dataset_reused_across_runs(self, default_params, default_chain, cell, cost, irl_steps):
        cfg = IrlConfig(delta=0.1, i_max=1, n_paths=100, n_knots=2, n_probe=10, probe_times=3, eval_paths=4)
        initial = FieldState.uniform(cell, 0.6, 0.1, 1.0)
        first = irl_policy_iteration(cfg, default_params, default_chain, cost, irl_steps, initial)
        again = irl_policy_iteration(cfg, default_params, default_chain, cost, irl_steps, initial,
                                     dataset=first.dataset)
        np.testing.assert_array_equal(again.final.value.coeffs, first.final.value.coeffs)
        assert again.final.objective == first.final.objective

    def test_config_validation(self):
        with pytest.raises(ValidationError) as exc:
            IrlConfig(delta=0.0, i_max=0, behavior='greedy')
        keys = {k for k, _ in exc.value.violations}
        assert keys == {'irl.delta', 'irl.i_max', 'irl.behavior'}

    def test_window_steps(self):
        assert IrlConfig(delta=0.1).window_steps(0.01) == 10
        with pytest.raises(ValidationError):
            IrlConfig(delta=0.1).window_steps(0.03)


@pytest.mark.slow
class TestLearningAcceptance:
    """Policy iteration on the single-cell, single-regime problem"""

    def test_monotone_feasible_and_close_to_sweep(self, regime_one, single_chain, cell, cost):
        steps = StepConfig(dt=0.01, t_final=5.0, rng_seed=0)
        initial = FieldState.uniform(cell, 0.6, 0.1, 1.0)
        cfg = IrlConfig(i_max=8)
        result = irl_policy_iteration(cfg, regime_one, single_chain, cost, steps, initial)
        assert len(result.history) == 8
        assert result.is_monotone()
        for it in result.history:
            controls = probe_controls(it.policy, result.probe, cell)
            assert controls.min() >= 0.0 and controls.max() <= 1.0

        # Same horizon as the learned policy; the sweep is open loop, hence the relative slack
        sweep = forward_backward_sweep(initial, regime_one, single_chain, cost, steps,
                                       SweepConfig(n_paths=cfg.eval_paths))
        final = result.final
        slack = 0.05 * sweep.objective + 2 * (final.objective_stderr + sweep.objective_stderr)
        assert abs(final.objective - sweep.objective) <= slack
        none, _ = evaluate_constant_control(0.0, initial, regime_one, single_chain, cost, steps, cfg.eval_paths)
        assert final.objective <= none + 2 * final.objective_stderr
