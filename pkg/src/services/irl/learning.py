"""Off-policy integral reinforcement learning on the mean-state value basis"""

from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy import linalg
from loguru import logger

from ...core.errors import ExcitationError, ValidationError
from ...core.grid import SpatialGrid
from ...core.integrator import ConstantPolicy, PolicyLike, StepConfig, path_streams
from ...core.model import CostParams, FieldState, SivParams
from ...core.regime import RegimeChain
from ..control import UNIT_BOX, check_bounds, evaluate_policy
from ..control.hamiltonian import HAMILTONIAN_WEIGHTING
from ..ensemble import EnsembleRunner
from .basis import BasisSpec, LINEAR, MONOMIALS, ProbeSet, ValueApprox, probe_states
from .policies import LearnedPolicy, UniformBehaviorPolicy


Array = NDArray[np.float64]

BEHAVIORS = ('uniform', 'constant')

# Cross-term columns below this are treated as on-policy data
ON_POLICY_ATOL = 1e-12


@dataclass(frozen=True)
class IrlConfig:
    """Settings of the learning loop"""
    delta: float = 0.1
    i_max: int = 5
    ridge: float = 1e-8
    n_paths: int = 500
    n_knots: int = 11
    stride: Optional[int] = None
    behavior: str = 'uniform'
    behavior_level: Tuple[float, float] = (0.5, 0.5)
    initial_policy: Tuple[float, float] = (0.0, 0.0)
    initial_box: Tuple[Tuple[float, float], ...] = ((0.0, 2.0), (0.0, 2.0), (0.0, 2.0))
    u1_bounds: Tuple[float, float] = (0.0, 1.0)
    u2_bounds: Tuple[float, float] = (0.0, 1.0)
    terminal_row_weight: float = 1e3
    rcond: float = 1e-10
    n_probe: int = 100
    probe_times: int = 11
    probe_seed: int = 0
    eval_paths: int = 200

    def __post_init__(self):
        violations = []
        if not self.delta > 0:
            violations.append(('irl.delta', f"must be positive, got {self.delta}"))
        if int(self.i_max) != self.i_max or self.i_max < 1:
            violations.append(('irl.i_max', f"must be an integer >= 1, got {self.i_max}"))
        if self.ridge < 0:
            violations.append(('irl.ridge', f"must be nonnegative, got {self.ridge}"))
        for key in ('n_paths', 'n_probe', 'eval_paths'):
            if int(getattr(self, key)) != getattr(self, key) or getattr(self, key) < 1:
                violations.append((f"irl.{key}", f"must be a positive integer, got {getattr(self, key)}"))
        if self.n_knots < 2:
            violations.append(('irl.n_knots', f"need at least 2 knots, got {self.n_knots}"))
        if self.stride is not None and self.stride < 1:
            violations.append(('irl.stride', f"must be a positive step count, got {self.stride}"))
        if self.behavior not in BEHAVIORS:
            violations.append(('irl.behavior', f"must be one of {BEHAVIORS}, got {self.behavior!r}"))
        if len(self.initial_box) != 3 or any(not lo < hi for lo, hi in self.initial_box):
            violations.append(('irl.initial_box', "need three (lo, hi) pairs with lo < hi"))
        if violations:
            raise ValidationError(violations)
        check_bounds((self.u1_bounds, self.u2_bounds))

    @property
    def bounds(self):
        return self.u1_bounds, self.u2_bounds

    def window_steps(self, dt: float) -> int:
        """Number of time steps in one window; delta must be a multiple of dt"""
        steps = self.delta / dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps) or round(steps) < 1:
            raise ValidationError.single('irl.delta', f"delta={self.delta} is not a multiple of dt={dt}")
        return int(round(steps))

    def replace(self, **changes) -> 'IrlConfig':
        data = asdict(self)
        data.update(changes)
        return IrlConfig(**data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(eq=False)
class TransitionDataset:
    """
    Behavior-policy paths cut into windows of `window` steps, starting every `stride` steps

    Per-step arrays keep the full path so that each iteration can replay
    its own target policy along the recorded states.
    """
    states: Array
    controls: Array
    regimes: NDArray[np.int64]
    grid: SpatialGrid
    dt: float
    window: int
    stride: int
    state_cost: Array
    control_cost: Array

    def __post_init__(self):
        n_steps = self.controls.shape[1]
        if self.window > n_steps:
            raise ValidationError.single('irl.delta', f"window of {self.window} steps exceeds the horizon of {n_steps}")
        self.starts = np.arange(0, n_steps - self.window + 1, self.stride)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def n_steps(self) -> int:
        return self.controls.shape[1]

    @property
    def n_windows(self) -> int:
        return self.n_paths * self.starts.size

    @property
    def times(self) -> Array:
        return np.arange(self.n_steps + 1) * self.dt

    def mean_states(self) -> Array:
        """(paths, steps + 1, 3) spatial means"""
        return self.states.mean(axis=-1)

    def window_sums(self, per_step: Array) -> Array:
        """
        Left Riemann sums over each window

        Args:
            per_step: (paths, steps, ...) integrand values

        Returns:
            (windows, ...) ordered path-major
        """
        cumulative = np.concatenate((np.zeros_like(per_step[:, :1]), np.cumsum(per_step, axis=1)), axis=1)
        sums = cumulative[:, self.starts + self.window] - cumulative[:, self.starts]
        return sums.reshape((-1,) + sums.shape[2:]) * self.dt

    def running_cost(self) -> Array:
        """Running cost of the behavior policy over each window"""
        return self.window_sums(self.state_cost + self.control_cost)

    def endpoints(self) -> Tuple[Array, Array, Array, Array]:
        """Mean states and times at window starts and ends, path-major"""
        xbar = self.mean_states()
        t = self.times
        x0 = xbar[:, self.starts].reshape(-1, 3)
        x1 = xbar[:, self.starts + self.window].reshape(-1, 3)
        t0 = np.tile(t[self.starts], self.n_paths)
        t1 = np.tile(t[self.starts + self.window], self.n_paths)
        return x0, t0, x1, t1


def _initial_states(grid: SpatialGrid, seed: int, n_paths: int, box) -> FieldState:
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    draws = np.stack([path_streams(seed, k).initial.uniform(lo, hi) for k in range(n_paths)])
    cells = np.ones(grid.n_cells)
    return FieldState(draws[:, 0, None] * cells, draws[:, 1, None] * cells, draws[:, 2, None] * cells, grid)


def collect_transitions(behavior: PolicyLike, params: SivParams, chain: RegimeChain, step_cfg: StepConfig,
                        n_paths: int, grid: SpatialGrid, cost: CostParams, delta: float,
                        stride: Optional[int] = None, initial: Optional[FieldState] = None,
                        initial_box: Sequence[Tuple[float, float]] = ((0.0, 2.0),) * 3,
                        threads: int = 1, initial_regime: int = 0) -> TransitionDataset:
    """
    Simulate behavior-policy paths and cut them into integration windows

    Args:
        behavior: Behavior policy generating the data
        params: Regime coefficients
        chain: Regime chain
        step_cfg: Step configuration
        n_paths: Number of paths
        grid: Spatial grid
        cost: Cost weights for the recorded running cost
        delta: Window width (multiple of dt)
        stride: Steps between window starts (default: one window)
        initial: Initial state; drawn per path in initial_box when omitted
        initial_box: Per-component (lo, hi) of the random initial states
        threads: Worker threads
        initial_regime: Regime at t = 0

    Returns:
        TransitionDataset
    """
    window = IrlConfig(delta=delta).window_steps(step_cfg.dt)
    if initial is None:
        initial = _initial_states(grid, step_cfg.rng_seed, n_paths, initial_box)
    runner = EnsembleRunner(params, chain, step_cfg, threads)
    result = runner.run(initial, behavior, n_paths, initial_regime, keep_controls=True)

    s = result.states[:, :-1, 0]
    i = result.states[:, :-1, 1]
    u = result.controls
    state_cost = grid.integrate_values(cost.a1 * s + cost.a2 * i)
    control_cost = HAMILTONIAN_WEIGHTING * grid.integrate_values(
        cost.tau1 * u[:, :, 0] ** 2 + cost.tau2 * u[:, :, 1] ** 2)
    dataset = TransitionDataset(
        states=result.states, controls=u, regimes=result.regimes, grid=grid, dt=step_cfg.dt,
        window=window, stride=window if stride is None else int(stride),
        state_cost=state_cost, control_cost=control_cost,
    )
    logger.info(f"Collected {dataset.n_windows} windows of {window} steps from {n_paths} paths")
    return dataset


@dataclass(frozen=True)
class FitDiagnostics:
    """Quality of one least-squares solve"""
    rows: int
    unknowns: int
    rank: int
    fit_stderr: float
    condition: float
    terminal_error: float
    mode: str

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _target_controls(dataset: TransitionDataset, policy: PolicyLike) -> Tuple[Array, Array]:
    """Target policy replayed along the recorded states, (paths, steps, cells) each"""
    u1 = np.empty_like(dataset.controls[:, :, 0])
    u2 = np.empty_like(u1)
    for k in range(dataset.n_steps):
        x = dataset.states[:, k]
        state = FieldState(x[:, 0], x[:, 1], x[:, 2], dataset.grid, k * dataset.dt)
        control = policy(state, k * dataset.dt, dataset.regimes[:, k])
        u1[:, k] = np.broadcast_to(control.u1, state.s.shape)
        u2[:, k] = np.broadcast_to(control.u2, state.s.shape)
    return u1, u2


def _deficient_directions(vt: Array, singular: Array, tol: float, names: Sequence[str]) -> List[str]:
    directions = []
    for row in vt[singular <= tol]:
        directions.append(names[int(np.argmax(np.abs(row)))])
    return sorted(set(directions))


def solve_integral_le(dataset: TransitionDataset, policy: PolicyLike, basis: BasisSpec, cost: CostParams,
                      params: SivParams, ridge: float = 1e-8, bounds: Sequence[Sequence[float]] = UNIT_BOX,
                      probe: Optional[ProbeSet] = None, terminal_row_weight: float = 1e3,
                      rcond: float = 1e-10) -> Tuple[ValueApprox, LearnedPolicy, FitDiagnostics]:
    """
    One policy-evaluation and improvement step from the windowed integral identity

        V(x(t0), t0) - V(x(t1), t1) - int [G1 c1 + G2 c2] ds = int L(x, u_i) ds

    where c1 = mean(S (u1 - u1_i)), c2 = mean(m I / (1 + eta I) (u2 - u2_i)) over
    cells and G1, G2 expand V_S - V_V and V_I - V_V. V and the G's are solved
    jointly; the terminal value is imposed by heavily weighted rows.

    Args:
        dataset: Behavior-policy windows
        policy: Current policy u_i (evaluated along the data)
        basis: Value basis
        cost: Cost weights (tau u^2 weighting on the control cost)
        params: Regime coefficients for m and eta
        ridge: Ridge penalty on the column-scaled system
        bounds: Box for the improved policy
        probe: Extra terminal-anchoring states, also used for the anchoring error
        terminal_row_weight: Weight of the terminal rows
        rcond: Relative singular-value cutoff of the rank check

    Returns:
        (V_i, u_{i+1}, diagnostics)
    """
    if dataset.n_windows == 0:
        raise ValidationError.single('dataset', "no windows to fit")
    if not np.isclose(basis.t_final, dataset.n_steps * dataset.dt):
        raise ValidationError.single('irl.time_knots', "basis horizon does not match the data")
    grid, length = dataset.grid, dataset.grid.length

    t_steps = dataset.times[:-1]
    u1_i, u2_i = _target_controls(dataset, policy)
    s = dataset.states[:, :-1, 0]
    i = dataset.states[:, :-1, 1]
    c = params.at(dataset.regimes[:, :-1])
    c1 = np.mean(s * (dataset.controls[:, :, 0] - u1_i), axis=-1)
    c2 = np.mean(c.m * i / (1.0 + c.eta * i) * (dataset.controls[:, :, 1] - u2_i), axis=-1)
    control_cost = HAMILTONIAN_WEIGHTING * grid.integrate_values(cost.tau1 * u1_i ** 2 + cost.tau2 * u2_i ** 2)
    rhs = dataset.window_sums(dataset.state_cost + control_cost)

    x0, t0, x1, t1 = dataset.endpoints()
    value_cols = basis.features(x0, t0) - basis.features(x1, t1)
    off_policy = max(np.max(np.abs(c1)), np.max(np.abs(c2))) > ON_POLICY_ATOL
    names = list(basis.names())
    if off_policy:
        psi = basis.gradient_features(dataset.mean_states()[:, :-1], t_steps[None, :])
        cross1 = -dataset.window_sums(psi * c1[..., None])
        cross2 = -dataset.window_sums(psi * c2[..., None])
        design = np.hstack((value_cols, cross1, cross2))
        names += list(basis.gradient_names('G1')) + list(basis.gradient_names('G2'))
    else:
        design = value_cols
    n_window_rows = design.shape[0]

    terminal_x = dataset.mean_states()[:, -1]
    if probe is not None:
        terminal_x = np.vstack((terminal_x, probe.states))
    terminal_cols = np.zeros((terminal_x.shape[0], design.shape[1]))
    terminal_cols[:, :basis.size] = basis.features(terminal_x, basis.t_final)
    terminal_rhs = cost.terminal_weight * length * terminal_x[:, 1]

    weight = terminal_row_weight * max(1.0, float(np.max(np.abs(design))))
    a = np.vstack((design, weight * terminal_cols))
    b = np.concatenate((rhs, weight * terminal_rhs))

    norms = np.linalg.norm(a, axis=0)
    norms[norms == 0] = 1.0
    scaled = a / norms
    _, singular, vt = linalg.svd(scaled, full_matrices=False)
    tol = rcond * singular[0]
    rank = int(np.sum(singular > tol))
    if rank < scaled.shape[1]:
        directions = _deficient_directions(vt, singular, tol, names)
        logger.error(f"Integral LE is rank deficient ({rank} < {scaled.shape[1]})")
        raise ExcitationError(directions, rank, scaled.shape[1])

    augmented = np.vstack((scaled, np.sqrt(ridge) * np.eye(scaled.shape[1])))
    solution, *_ = linalg.lstsq(augmented, np.concatenate((b, np.zeros(scaled.shape[1]))))
    theta = solution / norms

    value = ValueApprox(theta[:basis.size].reshape(basis.n_knots, len(MONOMIALS)), basis)
    if off_policy:
        gradients = theta[basis.size:].reshape(2, basis.n_knots, len(LINEAR))
        improved = LearnedPolicy(gradients, basis, params, cost, bounds)
        mode = 'off-policy'
    else:
        improved = LearnedPolicy.from_value(value, params, cost, bounds)
        mode = 'evaluation'

    residual = design @ theta - rhs
    dof = max(n_window_rows - design.shape[1], 1)
    fit_stderr = float(np.sqrt(residual @ residual / dof))
    anchor_x = probe.states if probe is not None else terminal_x
    terminal_error = float(np.max(np.abs(value(anchor_x, basis.t_final)
                                         - cost.terminal_weight * length * anchor_x[:, 1])))
    diagnostics = FitDiagnostics(
        rows=a.shape[0], unknowns=a.shape[1], rank=rank, fit_stderr=fit_stderr,
        condition=float(singular[0] / singular[-1]), terminal_error=terminal_error, mode=mode,
    )
    logger.debug(f"Integral LE fit ({mode}): {diagnostics.rows} rows, eps_fit={fit_stderr:.3g}, "
                 f"cond={diagnostics.condition:.3g}, anchor={terminal_error:.3g}")
    return value, improved, diagnostics


@dataclass(eq=False)
class IrlIteration:
    """V_i, the improved policy u_{i+1} and its objective estimate"""
    iteration: int
    value: ValueApprox
    policy: LearnedPolicy
    objective: float
    objective_stderr: float
    mean_probe_value: float
    policy_change: float
    diagnostics: FitDiagnostics

    def to_row(self) -> Tuple[int, float, float, float]:
        return self.iteration, self.mean_probe_value, self.objective, self.policy_change


@dataclass(eq=False)
class IrlResult:
    history: List[IrlIteration] = field(default_factory=list)
    dataset: Optional[TransitionDataset] = None
    probe: Optional[ProbeSet] = None

    @property
    def final(self) -> IrlIteration:
        return self.history[-1]

    def is_monotone(self) -> bool:
        """Mean probe values nonincreasing up to each fit's standard error"""
        pairs = zip(self.history, self.history[1:])
        return all(b.mean_probe_value <= a.mean_probe_value + b.diagnostics.fit_stderr for a, b in pairs)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'iterations': [
                {
                    'iteration': it.iteration,
                    'objective': it.objective,
                    'objective_stderr': it.objective_stderr,
                    'mean_probe_value': it.mean_probe_value,
                    'policy_change': it.policy_change,
                    'diagnostics': it.diagnostics.to_dict(),
                    'value': it.value.to_dict(),
                    'policy': it.policy.to_dict(),
                }
                for it in self.history
            ],
            'monotone': self.is_monotone(),
        }


def probe_controls(policy: PolicyLike, probe: ProbeSet, grid: SpatialGrid) -> Array:
    """(times, states, 2) mean controls of a policy on the probe grid, regime 0"""
    n = probe.states.shape[0]
    cells = np.ones(grid.n_cells)
    state = FieldState(probe.states[:, 0, None] * cells, probe.states[:, 1, None] * cells,
                       probe.states[:, 2, None] * cells, grid)
    out = np.empty((probe.times.size, n, 2))
    for k, t in enumerate(probe.times):
        control = policy(state, float(t), np.zeros(n, dtype=np.int64))
        out[k, :, 0] = np.broadcast_to(control.u1, state.s.shape).mean(axis=-1)
        out[k, :, 1] = np.broadcast_to(control.u2, state.s.shape).mean(axis=-1)
    return out


def behavior_policy(cfg: IrlConfig) -> PolicyLike:
    if cfg.behavior == 'uniform':
        return UniformBehaviorPolicy(cfg.delta, cfg.bounds)
    return ConstantPolicy(*cfg.behavior_level)


def irl_policy_iteration(cfg: IrlConfig, params: SivParams, chain: RegimeChain, cost: CostParams,
                         step_cfg: StepConfig, initial: FieldState, threads: int = 1,
                         initial_regime: int = 0, dataset: Optional[TransitionDataset] = None) -> IrlResult:
    """
    Policy iteration on one behavior dataset

    Each iteration fits V_i of the current policy, emits the box-projected
    improved policy and estimates its objective from `initial`.

    Args:
        cfg: Learning settings
        params: Regime coefficients
        chain: Regime chain
        cost: Cost weights
        step_cfg: Step configuration
        initial: State the objective estimates start from
        threads: Worker threads
        initial_regime: Regime at t = 0
        dataset: Reuse an existing dataset instead of collecting one

    Returns:
        IrlResult with one entry per iteration
    """
    grid = initial.grid
    basis = BasisSpec.uniform(step_cfg.t_final, cfg.n_knots)
    probe = probe_states(cfg.n_probe, cfg.probe_seed, step_cfg.t_final, cfg.probe_times)
    if dataset is None:
        dataset = collect_transitions(behavior_policy(cfg), params, chain, step_cfg, cfg.n_paths, grid, cost,
                                      cfg.delta, cfg.stride, initial_box=cfg.initial_box, threads=threads,
                                      initial_regime=initial_regime)

    logger.info(f"IRL policy iteration: i_max={cfg.i_max}, {dataset.n_windows} windows, behavior={cfg.behavior}")
    start_time = datetime.now()
    policy: PolicyLike = ConstantPolicy(*cfg.initial_policy)
    result = IrlResult(dataset=dataset, probe=probe)
    probe_x, probe_t = probe.grid()

    for iteration in range(1, cfg.i_max + 1):
        value, improved, diagnostics = solve_integral_le(dataset, policy, basis, cost, params, cfg.ridge,
                                                         cfg.bounds, probe, cfg.terminal_row_weight, cfg.rcond)
        mean_probe = float(np.mean(value(probe_x, probe_t)))
        change = float(np.sqrt(np.mean((probe_controls(improved, probe, grid)
                                        - probe_controls(policy, probe, grid)) ** 2)))
        j, stderr = evaluate_policy(improved, initial, params, chain, cost, step_cfg, cfg.eval_paths,
                                    threads, initial_regime=initial_regime)
        if result.history and mean_probe > result.history[-1].mean_probe_value + diagnostics.fit_stderr:
            logger.warning(f"Mean probe value rose at iteration {iteration}: "
                           f"{result.history[-1].mean_probe_value:.6g} -> {mean_probe:.6g}")
        result.history.append(IrlIteration(iteration, value, improved, j, stderr, mean_probe, change, diagnostics))
        logger.info(f"IRL iteration {iteration}: mean V={mean_probe:.6g}, J={j:.6g} +/- {stderr:.3g}, "
                    f"policy change={change:.3g}")
        policy = improved

    elapsed = (datetime.now() - start_time).total_seconds()
    logger.info(f"IRL finished in {elapsed:.2f}s")
    return result
