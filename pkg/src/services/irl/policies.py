"""Behavior and learned policies for off-policy learning"""

from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from ...core.errors import ValidationError
from ...core.integrator import ControlPolicy, path_streams
from ...core.model import ControlField, CostParams, FieldState, SivParams
from ..control import UNIT_BOX, check_bounds
from .basis import BasisSpec, LINEAR, ValueApprox


Array = NDArray[np.float64]


class UniformBehaviorPolicy(ControlPolicy):
    """
    Spatially uniform controls drawn uniformly in the box, redrawn every window

    Unbound instances return the box centre; the simulator binds one
    generator per path through for_paths().
    """

    def __init__(self, window: float, bounds: Sequence[Sequence[float]] = UNIT_BOX,
                 streams: Optional[List[np.random.Generator]] = None):
        if not window > 0:
            raise ValidationError.single('irl.delta', f"window must be positive, got {window}")
        self.window = float(window)
        self.bounds = check_bounds(bounds)
        self._streams = streams
        self._current: Optional[Array] = None
        self._window_index = -1

    def for_paths(self, path_indices: Sequence[int], master_seed: int) -> 'UniformBehaviorPolicy':
        streams = [path_streams(master_seed, k).policy for k in path_indices]
        return UniformBehaviorPolicy(self.window, self.bounds, streams)

    def _draw(self) -> Array:
        lo = np.array([self.bounds[0][0], self.bounds[1][0]])
        hi = np.array([self.bounds[0][1], self.bounds[1][1]])
        return np.stack([rng.uniform(lo, hi) for rng in self._streams])

    def __call__(self, state: FieldState, t: float, regimes) -> ControlField:
        if self._streams is None:
            centre = [(lo + hi) / 2 for lo, hi in self.bounds]
            return ControlField(np.full(state.s.shape, centre[0]), np.full(state.s.shape, centre[1]), state.grid)
        index = int(np.floor(t / self.window + 1e-9))
        if index != self._window_index:
            self._current = self._draw()
            self._window_index = index
        values = self._current
        if state.s.ndim == 1:
            values = values[0]
            u1 = np.full(state.s.shape, values[0])
            u2 = np.full(state.s.shape, values[1])
        else:
            u1 = np.broadcast_to(values[:, 0, None], state.s.shape)
            u2 = np.broadcast_to(values[:, 1, None], state.s.shape)
        return ControlField(u1, u2, state.grid)


class LearnedPolicy(ControlPolicy):
    """
    Improved policy from fitted value gradients

    u1 = S (V_S - V_V) / (2 tau1 |domain|), u2 = m I (V_I - V_V) / (2 tau2 (1 + eta I) |domain|),
    projected into the box. gradients holds the (1, S, I, V) expansions of
    V_S - V_V and V_I - V_V per knot, shape (2, n_knots, 4).
    """

    def __init__(self, gradients: Array, basis: BasisSpec, params: SivParams, cost: CostParams,
                 bounds: Sequence[Sequence[float]] = UNIT_BOX):
        gradients = np.asarray(gradients, dtype=np.float64)
        if gradients.shape != (2, basis.n_knots, len(LINEAR)):
            raise ValidationError.single('gradients', f"expected {(2, basis.n_knots, len(LINEAR))}, got {gradients.shape}")
        self.gradients = gradients
        self.basis = basis
        self.params = params
        self.cost = cost
        self.bounds = check_bounds(bounds)

    @classmethod
    def from_value(cls, value: ValueApprox, params: SivParams, cost: CostParams,
                   bounds: Sequence[Sequence[float]] = UNIT_BOX) -> 'LearnedPolicy':
        """Gradients taken analytically from the value basis"""
        g = value.gradient_coefficients()
        return cls(np.stack((g[0] - g[2], g[1] - g[2])), value.basis, params, cost, bounds)

    @classmethod
    def zero(cls, basis: BasisSpec, params: SivParams, cost: CostParams,
             bounds: Sequence[Sequence[float]] = UNIT_BOX) -> 'LearnedPolicy':
        return cls(np.zeros((2, basis.n_knots, len(LINEAR))), basis, params, cost, bounds)

    def slopes(self, mean_state: Array, t) -> Array:
        """(..., 2) values of V_S - V_V and V_I - V_V"""
        psi = self.basis.gradient_features(mean_state, t)
        return np.einsum('...f,cf->...c', psi, self.gradients.reshape(2, -1))

    def control_arrays(self, s: Array, i: Array, v: Array, t: float, regimes, length: float) -> Tuple[Array, Array]:
        mean_state = np.stack((s.mean(axis=-1), i.mean(axis=-1), v.mean(axis=-1)), axis=-1)
        g = self.slopes(mean_state, t)
        c = self.params.at(regimes)
        u1 = s * g[..., 0, None] / (2.0 * self.cost.tau1 * length)
        u2 = c.m * i * g[..., 1, None] / (2.0 * self.cost.tau2 * (1.0 + c.eta * i) * length)
        return np.clip(u1, *self.bounds[0]), np.clip(u2, *self.bounds[1])

    def __call__(self, state: FieldState, t: float, regimes) -> ControlField:
        u1, u2 = self.control_arrays(state.s, state.i, state.v, t, regimes, state.grid.length)
        return ControlField(u1, u2, state.grid)

    def to_dict(self) -> dict:
        return {'policy_gradients': self.gradients.tolist(), 'bounds': [list(b) for b in self.bounds]}
