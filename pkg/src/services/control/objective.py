"""Monte Carlo objective and control-set metric"""

from typing import Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from loguru import logger

from ...core.errors import ValidationError
from ...core.grid import SpatialGrid
from ...core.integrator import ConstantPolicy, EnsembleResult, PolicyLike, StepConfig
from ...core.model import CostParams, FieldState, SivParams
from ...core.regime import RegimeChain
from ..ensemble import EnsembleRunner


Array = NDArray[np.float64]


def path_costs(result: EnsembleResult, cost: CostParams, controls: Optional[Array] = None,
               control_weighting: Optional[float] = None) -> Array:
    """
    Cost of every path: left Riemann sum of the running cost plus the terminal cost

    Args:
        result: Complete ensemble (every step recorded)
        cost: Cost weights
        controls: (steps, 2, cells) schedule or (paths, steps, 2, cells); defaults to the recorded controls
        control_weighting: Coefficient on tau u^2 (default cost.control_weighting)

    Returns:
        Array (paths,)
    """
    if not result.is_complete:
        raise ValidationError.single('ensemble', "objective needs every step recorded")
    if controls is None:
        controls = result.controls
    if controls is None:
        raise ValidationError.single('controls', "no controls supplied and none recorded")
    w = cost.control_weighting if control_weighting is None else control_weighting
    grid, dt = result.grid, result.cfg.dt

    s = result.states[:, :-1, 0]
    i = result.states[:, :-1, 1]
    u = np.broadcast_to(controls, s.shape[:2] + (2, grid.n_cells))
    density = cost.a1 * s + cost.a2 * i + w * (cost.tau1 * u[..., 0, :] ** 2 + cost.tau2 * u[..., 1, :] ** 2)
    running = density.sum(axis=(1, 2)) * grid.dx * dt
    terminal = cost.terminal_weight * grid.integrate_values(result.states[:, -1, 1])
    return running + terminal


def mean_and_stderr(values: Array) -> Tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValidationError.single('ensemble', "must be nonempty")
    stderr = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
    return float(values.mean()), stderr


def objective(result: EnsembleResult, cost: CostParams, controls: Optional[Array] = None,
              control_weighting: Optional[float] = None) -> Tuple[float, float]:
    """
    Monte Carlo estimate of the objective

    Returns:
        (mean over paths, standard error)
    """
    return mean_and_stderr(path_costs(result, cost, controls, control_weighting))


def control_metric(u: Array, other: Array, grid: SpatialGrid, dt: float, atol: float = 0.0) -> float:
    """
    Measure of the set {(x, t): u(x, t) != other(x, t)}

    Args:
        u, other: Stacked controls (steps, 2, cells), or (paths, steps, 2, cells) for per-path controls
        grid: Spatial grid
        dt: Step size
        atol: Values closer than atol count as equal

    Returns:
        Area in space-time, averaged over paths when per-path
    """
    u, other = np.broadcast_arrays(np.asarray(u, dtype=np.float64), np.asarray(other, dtype=np.float64))
    if u.ndim not in (3, 4) or u.shape[-2] != 2 or u.shape[-1] != grid.n_cells:
        raise ValidationError.single('controls', f"expected (..., steps, 2, {grid.n_cells}), got {u.shape}")
    differs = np.any(np.abs(u - other) > atol, axis=-2)
    area = differs.sum(axis=(-2, -1)) * grid.dx * dt
    return float(np.mean(area))


def evaluate_policy(policy: PolicyLike, initial: FieldState, params: SivParams, chain: RegimeChain,
                    cost: CostParams, cfg: StepConfig, n_paths: int, threads: int = 1,
                    control_weighting: Optional[float] = None, initial_regime: int = 0) -> Tuple[float, float]:
    """J of a feedback policy, as (mean, stderr), streaming batch costs"""
    runner = EnsembleRunner(params, chain, cfg, threads)

    def reduce(result: EnsembleResult) -> Array:
        return path_costs(result, cost, control_weighting=control_weighting)

    costs = np.concatenate(runner.map_batches(initial, policy, n_paths, reduce, initial_regime,
                                              keep_controls=True))
    return mean_and_stderr(costs)


def evaluate_constant_control(level: Union[float, Tuple[float, float]], initial: FieldState, params: SivParams,
                              chain: RegimeChain, cost: CostParams, cfg: StepConfig, n_paths: int,
                              threads: int = 1, control_weighting: Optional[float] = None) -> Tuple[float, float]:
    """J for u identically equal to level, as (mean, stderr)"""
    u1, u2 = (level, level) if np.isscalar(level) else level
    mean, stderr = evaluate_policy(ConstantPolicy(u1, u2), initial, params, chain, cost, cfg, n_paths,
                                   threads, control_weighting)
    logger.info(f"J(u1={u1}, u2={u2}) = {mean:.6g} +/- {stderr:.3g}")
    return mean, stderr
