"""Forward-backward sweep for the open-loop optimal control"""

from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from loguru import logger

from ...core.errors import ValidationError
from ...core.grid import SpatialGrid
from ...core.integrator import EnsembleResult, OpenLoopPolicy, StepConfig, adjoint_arrays
from ...core.model import ControlField, CostParams, FieldState, SivParams
from ...core.regime import RegimeChain
from ..ensemble import EnsembleRunner
from .hamiltonian import HAMILTONIAN_WEIGHTING, Bounds, check_bounds, project_arrays, regular_control_arrays
from .objective import mean_and_stderr, path_costs


Array = NDArray[np.float64]


@dataclass(frozen=True)
class SweepConfig:
    """Iteration controls of the forward-backward sweep"""
    max_iters: int = 50
    relax: float = 0.5
    tol: float = 1e-3
    u1_bounds: Tuple[float, float] = (0.0, 1.0)
    u2_bounds: Tuple[float, float] = (0.0, 1.0)
    n_paths: int = 200
    threads: int = 1

    def __post_init__(self):
        violations = []
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            violations.append(('sweep.max_iters', f"must be a positive integer, got {self.max_iters}"))
        if not 0 < self.relax <= 1:
            violations.append(('sweep.relax', f"must lie in (0, 1], got {self.relax}"))
        if not self.tol > 0:
            violations.append(('sweep.tol', f"must be positive, got {self.tol}"))
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            violations.append(('sweep.paths', f"must be a positive integer, got {self.n_paths}"))
        if violations:
            raise ValidationError(violations)
        box = check_bounds((self.u1_bounds, self.u2_bounds))
        object.__setattr__(self, 'u1_bounds', box[0])
        object.__setattr__(self, 'u2_bounds', box[1])

    @property
    def bounds(self) -> Bounds:
        return self.u1_bounds, self.u2_bounds

    def replace(self, **changes) -> 'SweepConfig':
        data = asdict(self)
        data.update(changes)
        return SweepConfig(**data)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['u1_bounds'] = list(self.u1_bounds)
        data['u2_bounds'] = list(self.u2_bounds)
        return data


@dataclass(frozen=True)
class SweepIteration:
    iteration: int
    objective: float
    stderr: float
    control_change: float

    def to_row(self) -> Tuple[int, float, float, float]:
        return self.iteration, self.objective, self.stderr, self.control_change


@dataclass(eq=False)
class ControlSolution:
    """
    Result of the sweep

    control is the open-loop schedule (steps, 2, cells) shared by every path;
    adjoint_mean is the path-averaged costate (steps + 1, 3, cells).
    """
    control: Array
    grid: SpatialGrid
    dt: float
    objective: float
    objective_stderr: float
    iterations: int
    converged: bool
    residual: float
    history: List[SweepIteration] = field(default_factory=list)
    adjoint_mean: Optional[Array] = None

    def __post_init__(self):
        if not np.isfinite(self.objective):
            raise ValidationError.single('objective', "objective is not finite")

    @property
    def times(self) -> Array:
        return np.arange(self.control.shape[0]) * self.dt

    def control_at(self, k: int) -> ControlField:
        return ControlField(self.control[k, 0], self.control[k, 1], self.grid)

    def controls(self) -> List[ControlField]:
        return [self.control_at(k) for k in range(self.control.shape[0])]

    def policy(self) -> OpenLoopPolicy:
        return OpenLoopPolicy(self.control, self.dt, self.grid)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'objective': self.objective,
            'objective_stderr': self.objective_stderr,
            'iterations': self.iterations,
            'converged': self.converged,
            'residual': self.residual,
            'history': [asdict(h) for h in self.history],
        }


def _relative(change: Array, reference: Array) -> float:
    norm = float(np.linalg.norm(reference))
    delta = float(np.linalg.norm(change))
    return delta / norm if norm > 0 else delta


class _SweepPass:
    """Forward ensemble plus backward adjoint for one control schedule, reduced batch by batch"""

    def __init__(self, params: SivParams, cost: CostParams, step_cfg: StepConfig):
        self.params = params
        self.cost = cost
        self.step_cfg = step_cfg

    def __call__(self, result: EnsembleResult) -> Tuple[Array, Array, Array, Array]:
        p = adjoint_arrays(result.states, result.regimes, result.controls, result.noise, self.params,
                           self.cost, result.grid, self.step_cfg.dt, self.step_cfg.adjoint)
        x = result.states[:, :-1]
        c = self.params.at(result.regimes[:, :-1])
        later = p[:, 1:]
        u1, u2 = regular_control_arrays(x[:, :, 0], x[:, :, 1], later[:, :, 0], later[:, :, 1], later[:, :, 2],
                                        c, self.cost)
        monitored = path_costs(result, self.cost, control_weighting=HAMILTONIAN_WEIGHTING)
        reported = path_costs(result, self.cost)
        raw_sum = np.stack((u1, u2), axis=2).sum(axis=0)
        return monitored, reported, raw_sum, p.sum(axis=0)


def forward_backward_sweep(initial: FieldState, params: SivParams, chain: RegimeChain, cost: CostParams,
                           step_cfg: StepConfig, sweep_cfg: SweepConfig,
                           initial_guess: Optional[Array] = None) -> ControlSolution:
    """
    Iterate forward simulation, backward adjoint and projected control update

    The noise is fixed across iterations (same seed and path indices), the
    update uses the path mean of the regular control and is damped by relax.

    Args:
        initial: Initial state
        params: Regime coefficients
        chain: Regime chain
        cost: Cost weights
        step_cfg: Step configuration
        sweep_cfg: Iteration controls
        initial_guess: Starting schedule (steps, 2, cells), zero by default

    Returns:
        ControlSolution; converged is False when max_iters ran out
    """
    grid = initial.grid
    n_steps = step_cfg.n_steps
    shape = (n_steps, 2, grid.n_cells)
    guess = np.zeros(shape) if initial_guess is None else np.asarray(initial_guess, dtype=np.float64)
    u = project_arrays(guess, sweep_cfg.bounds)
    if u.shape != shape:
        raise ValidationError.single('initial_guess', f"expected {shape}, got {u.shape}")

    runner = EnsembleRunner(params, chain, step_cfg, sweep_cfg.threads)
    reducer = _SweepPass(params, cost, step_cfg)

    def evaluate(schedule: Array):
        parts = runner.map_batches(initial, OpenLoopPolicy(schedule, step_cfg.dt, grid), sweep_cfg.n_paths,
                                   reducer, keep_controls=True, keep_noise=True)
        monitored = np.concatenate([part[0] for part in parts])
        reported = np.concatenate([part[1] for part in parts])
        raw = sum(part[2] for part in parts) / sweep_cfg.n_paths
        adjoint = sum(part[3] for part in parts) / sweep_cfg.n_paths
        return monitored, reported, project_arrays(raw, sweep_cfg.bounds), adjoint

    logger.info(f"Forward-backward sweep: {sweep_cfg.n_paths} paths, {n_steps} steps, relax {sweep_cfg.relax}")
    start_time = datetime.now()
    history: List[SweepIteration] = []
    converged = False
    iteration = 0

    for iteration in range(1, sweep_cfg.max_iters + 1):
        monitored, _, target, _ = evaluate(u)
        updated = (1.0 - sweep_cfg.relax) * u + sweep_cfg.relax * target
        change = _relative(updated - u, updated)
        j, stderr = mean_and_stderr(monitored)
        history.append(SweepIteration(iteration, j, stderr, change))
        logger.debug(f"Sweep iteration {iteration}: J={j:.6g} +/- {stderr:.3g}, change={change:.3g}")
        if len(history) > 1 and j > history[-2].objective + history[-2].stderr:
            logger.warning(f"Objective rose at iteration {iteration}: {history[-2].objective:.6g} -> {j:.6g}")
        u = updated
        if change <= sweep_cfg.tol:
            converged = True
            break

    _, reported, target, adjoint_mean = evaluate(u)
    residual = _relative(u - target, u)
    j, stderr = mean_and_stderr(reported)
    elapsed = (datetime.now() - start_time).total_seconds()
    if converged:
        logger.info(f"Sweep converged after {iteration} iterations in {elapsed:.2f}s: J={j:.6g} +/- {stderr:.3g}")
    else:
        logger.warning(f"Sweep stopped at max_iters={sweep_cfg.max_iters} without converging (J={j:.6g})")

    return ControlSolution(
        control=u, grid=grid, dt=step_cfg.dt, objective=j, objective_stderr=stderr,
        iterations=iteration, converged=converged, residual=residual,
        history=history, adjoint_mean=adjoint_mean,
    )
