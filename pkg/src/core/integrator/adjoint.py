"""Backward stepping of the adjoint (costate) system"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from loguru import logger

from ..errors import IntegrationBlowupError, ValidationError
from ..grid import SpatialGrid
from ..model import Coefficients, CostParams, SivParams
from .config import ADJOINT_SCHEMES
from .trajectory import TrajectoryRecord


Array = NDArray[np.float64]


@dataclass(eq=False)
class AdjointState:
    """
    Costates p = (p1, p2, p3) and martingale fields q = (q1, q2, q3)

    Arrays are (cells,) or (paths, cells); q defaults to zero.
    """
    p1: Array
    p2: Array
    p3: Array
    grid: SpatialGrid
    time: float = 0.0
    q1: Optional[Array] = None
    q2: Optional[Array] = None
    q3: Optional[Array] = None

    def __post_init__(self):
        arrays = np.broadcast_arrays(*(np.asarray(x, dtype=np.float64) for x in (self.p1, self.p2, self.p3)))
        if arrays[0].shape[-1] != self.grid.n_cells:
            raise ValidationError.single('adjoint', f"expected {self.grid.n_cells} cells, got {arrays[0].shape[-1]}")
        self.p1, self.p2, self.p3 = (a.copy() for a in arrays)
        zeros = np.zeros_like(self.p1)
        self.q1, self.q2, self.q3 = (zeros.copy() if q is None else np.broadcast_to(q, zeros.shape).astype(np.float64)
                                     for q in (self.q1, self.q2, self.q3))
        for name in ('p1', 'p2', 'p3', 'q1', 'q2', 'q3'):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError.single('adjoint', f"{name} has non-finite values")

    @classmethod
    def terminal(cls, grid: SpatialGrid, terminal_weight: float = 1.0, time: float = 0.0,
                 n_paths: Optional[int] = None) -> 'AdjointState':
        """p(T) = gradient of terminal_weight * integral of I"""
        shape = (grid.n_cells,) if n_paths is None else (n_paths, grid.n_cells)
        zeros = np.zeros(shape)
        return cls(zeros, np.full(shape, float(terminal_weight)), zeros, grid, time)

    @classmethod
    def from_stack(cls, p: Array, grid: SpatialGrid, time: float = 0.0, q: Optional[Array] = None) -> 'AdjointState':
        """From arrays (..., 3, cells)"""
        qs = (None, None, None) if q is None else (q[..., 0, :], q[..., 1, :], q[..., 2, :])
        return cls(p[..., 0, :], p[..., 1, :], p[..., 2, :], grid, time, *qs)

    def stack(self) -> Array:
        return np.stack((self.p1, self.p2, self.p3), axis=-2)

    def q_stack(self) -> Array:
        return np.stack((self.q1, self.q2, self.q3), axis=-2)

    def mean(self) -> 'AdjointState':
        """Path average of a batched adjoint"""
        if self.p1.ndim == 1:
            return self
        return AdjointState(self.p1.mean(axis=0), self.p2.mean(axis=0), self.p3.mean(axis=0), self.grid, self.time,
                            self.q1.mean(axis=0), self.q2.mean(axis=0), self.q3.mean(axis=0))


def _laplacians(p: Array, c: Coefficients, grid: SpatialGrid) -> Tuple[Array, Array, Array]:
    return (c.d1 * grid.apply_laplacian(p[..., 0, :]),
            c.d2 * grid.apply_laplacian(p[..., 1, :]),
            c.d3 * grid.apply_laplacian(p[..., 2, :]))


def hamiltonian_gradient(x: Array, u: Array, p: Array, q: Array, c: Coefficients,
                         cost: CostParams, grid: SpatialGrid) -> Array:
    """
    dH/dX for the stacked state x (..., 3, cells)

    Includes the running-cost weights A1, A2 and the costate diffusion D p_xx.
    """
    s, i, v = x[..., 0, :], x[..., 1, :], x[..., 2, :]
    u1, u2 = u[..., 0, :], u[..., 1, :]
    p1, p2, p3 = p[..., 0, :], p[..., 1, :], p[..., 2, :]
    q1, q2, q3 = q[..., 0, :], q[..., 1, :], q[..., 2, :]
    lap1, lap2, lap3 = _laplacians(p, c, grid)
    leak = 1.0 - c.e
    saturation = c.m * u2 / (1.0 + c.eta * i) ** 2

    dh_ds = (cost.a1 - (c.mu + u1 + c.beta * i) * p1 + c.beta * i * p2 + u1 * p3
             - c.sigma * i * q1 + c.sigma * i * q2 + lap1)
    dh_di = (cost.a2 + (c.alpha - c.beta * s) * p1
             + (c.beta * s + leak * c.beta * v - (c.mu + c.alpha) - saturation) * p2
             + (-leak * c.beta * v + saturation) * p3
             - c.sigma * s * q1 + (c.sigma * s + leak * c.sigma * v) * q2 - leak * c.sigma * v * q3 + lap2)
    dh_dv = (leak * c.beta * i * p2 - (c.mu + leak * c.beta * i) * p3
             + leak * c.sigma * i * q2 - leak * c.sigma * i * q3 + lap3)
    return np.stack((dh_ds, dh_di, dh_dv), axis=-2)


def consistent_adjoint_step(x: Array, u: Array, p: Array, q: Array, c: Coefficients, cost: CostParams,
                            grid: SpatialGrid, dt: float, zeta: Array) -> Array:
    """
    p_k = p_{k+1} + dH/dX dt - q sqrt(dt) zeta

    x, u and c belong to forward step k; p and q are the values at k + 1.
    """
    return p + hamiltonian_gradient(x, u, p, q, c, cost, grid) * dt - q * np.sqrt(dt) * zeta[..., :3, :]


def literal_adjoint_step(x: Array, u: Array, p: Array, q: Array, c: Coefficients, cost: CostParams,
                         grid: SpatialGrid, dt: float, zeta: Array) -> Array:
    """
    Literal backward lines: bracket signs kept and no running-cost weights

    x and c belong to the later grid point, u to the step itself.
    """
    s, i, v = x[..., 0, :], x[..., 1, :], x[..., 2, :]
    u1, u2 = u[..., 0, :], u[..., 1, :]
    p1, p2, p3 = p[..., 0, :], p[..., 1, :], p[..., 2, :]
    q1, q2, q3 = q[..., 0, :], q[..., 1, :], q[..., 2, :]
    z1, z2 = zeta[..., 0, :], zeta[..., 1, :]
    lap1, lap2, lap3 = _laplacians(p, c, grid)
    leak = 1.0 - c.e
    saturation = c.m * u2 / (1.0 + c.eta * i) ** 2
    root = np.sqrt(dt)

    new1 = (p1 - (((c.mu + u1) * s + c.beta * i) * p1 + lap1 + c.beta * i * p2 + u1 * p3
                  - c.sigma * i * q1 + c.sigma * i * q2) * dt
            - q1 * root * z1 - 0.5 * q1 ** 2 * (z1 ** 2 - 1.0) * dt)
    new2 = (p2 - ((c.alpha - c.beta * s) * p1
                  + (c.beta * s + leak * c.beta * v - (c.mu + c.alpha) - saturation) * p2 + lap2
                  - (leak * c.beta * v - saturation) * p3
                  - c.sigma * s * q1 + (c.sigma * s + leak * c.sigma * v) * q2 - leak * c.sigma * v * q3) * dt
            - q2 * root * z2 - 0.5 * q2 ** 2 * (z2 ** 2 - 1.0) * dt)
    new3 = p3 + (leak * c.beta * i * p2 - (c.mu + leak * c.beta * i) * p3 + lap3
                 + leak * c.sigma * i * q2 - leak * c.sigma * i * q3) * dt
    return np.stack((new1, new2, new3), axis=-2)


ADJOINT_STEPS = {'consistent': consistent_adjoint_step, 'literal': literal_adjoint_step}


def adjoint_arrays(states: Array, regimes: NDArray[np.int64], controls: Array, noise: Array,
                   params: SivParams, cost: CostParams, grid: SpatialGrid, dt: float,
                   scheme: str = 'consistent', q: Optional[Array] = None) -> Array:
    """
    Backward sweep on raw arrays

    Args:
        states: (..., steps + 1, 3, cells) forward states on the full time grid
        regimes: (..., steps + 1) regime indices
        controls: (..., steps, 2, cells) controls held over each step
        noise: (..., steps, 4, cells) forward draws, replayed by the q terms
        params: Regime coefficients
        cost: Cost weights; terminal_weight scales p2(T)
        grid: Spatial grid
        dt: Step size
        scheme: 'consistent' or 'literal'
        q: Optional (..., steps + 1, 3, cells) martingale fields (zero by default)

    Returns:
        p with the shape of states
    """
    if scheme not in ADJOINT_SCHEMES:
        raise ValidationError.single('stepping.adjoint', f"must be one of {ADJOINT_SCHEMES}, got {scheme!r}")
    n_records = states.shape[-3]
    n_steps = n_records - 1
    if controls.shape[-3] != n_steps or noise.shape[-3] != n_steps:
        raise ValidationError.single('adjoint', "controls and noise must have one entry per step")
    if q is None:
        q = np.zeros_like(states)
    step = ADJOINT_STEPS[scheme]

    p = np.zeros_like(states)
    p[..., n_steps, 1, :] = cost.terminal_weight
    for k in range(n_steps - 1, -1, -1):
        # literal lines read the state at the later grid point
        at = k + 1 if scheme == 'literal' else k
        c = params.at(regimes[..., at])
        p_k = step(states[..., at, :, :], controls[..., k, :, :], p[..., k + 1, :, :], q[..., k + 1, :, :],
                   c, cost, grid, dt, noise[..., k, :, :])
        if not np.all(np.isfinite(p_k)):
            bad = np.argwhere(~np.isfinite(p_k))[0]
            component = ('p1', 'p2', 'p3')[int(bad[-2])]
            logger.error(f"Adjoint blew up at step {k}")
            raise IntegrationBlowupError(component, scheme, int(bad[-1]), k)
        p[..., k, :, :] = p_k
    return p


def adjoint_backward_sweep(traj: TrajectoryRecord, params: SivParams, cost: CostParams,
                           controls: Optional[Array] = None, dt: Optional[float] = None,
                           scheme: str = 'consistent', q: Optional[Array] = None) -> List[AdjointState]:
    """
    Costates along one recorded path, from p(T) = terminal_weight * (0, 1, 0) backward

    Args:
        traj: Complete TrajectoryRecord with noise draws
        params: Regime coefficients
        cost: Cost weights
        controls: (steps, 2, cells) controls; defaults to the recorded ones
        dt: Step size; defaults to the record's uniform spacing
        scheme: 'consistent' or 'literal'
        q: Optional martingale fields (steps + 1, 3, cells)

    Returns:
        One AdjointState per recorded time
    """
    if controls is None:
        controls = traj.controls
    if controls is None:
        raise ValidationError.single('controls', "no controls supplied and none recorded")
    noise = traj.noise_draws
    if noise is None:
        noise = np.zeros((len(traj) - 1, 4, traj.grid.n_cells))
    if dt is None:
        dt = float(traj.times[1] - traj.times[0])
    p = adjoint_arrays(traj.states, traj.regimes, np.asarray(controls, dtype=np.float64), noise,
                       params, cost, traj.grid, dt, scheme, q)
    qs = np.zeros_like(p) if q is None else q
    return [AdjointState.from_stack(p[k], traj.grid, float(t), qs[k]) for k, t in enumerate(traj.times)]


def adjoint_at(p: Array, k: int, grid: SpatialGrid, time: float) -> AdjointState:
    """AdjointState view of index k of a (..., steps + 1, 3, cells) array"""
    return AdjointState.from_stack(p[..., k, :, :], grid, time)


