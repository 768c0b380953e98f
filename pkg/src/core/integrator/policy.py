"""Control policies consumed by the simulator"""

from typing import Callable, Sequence, Union

import numpy as np
from numpy.typing import NDArray

from ..errors import ValidationError
from ..grid import SpatialGrid
from ..model import ControlField, FieldState


class ControlPolicy:
    """
    Feedback law (state, t, regimes) -> ControlField

    The simulator calls for_paths() once per batch so that policies holding
    per-path randomness can bind their streams to the path indices.
    """

    def __call__(self, state: FieldState, t: float, regimes) -> ControlField:
        raise NotImplementedError

    def for_paths(self, path_indices: Sequence[int], master_seed: int) -> 'ControlPolicy':
        return self


PolicyLike = Union[ControlPolicy, Callable[[FieldState, float, object], ControlField]]


class ConstantPolicy(ControlPolicy):
    """u1 and u2 fixed everywhere"""

    def __init__(self, u1: float = 0.0, u2: float = 0.0):
        if not (0 <= u1 <= 1 and 0 <= u2 <= 1):
            raise ValidationError.single('policy', f"constant control ({u1}, {u2}) outside [0, 1]")
        self.u1 = float(u1)
        self.u2 = float(u2)

    def __call__(self, state: FieldState, t: float, regimes) -> ControlField:
        shape = state.s.shape
        return ControlField(np.full(shape, self.u1), np.full(shape, self.u2), state.grid)

    def __repr__(self) -> str:
        return f"ConstantPolicy(u1={self.u1}, u2={self.u2})"


class OpenLoopPolicy(ControlPolicy):
    """Deterministic control schedule (n_steps, 2, cells) shared by all paths"""

    def __init__(self, schedule: NDArray[np.float64], dt: float, grid: SpatialGrid):
        schedule = np.asarray(schedule, dtype=np.float64)
        if schedule.ndim != 3 or schedule.shape[1] != 2 or schedule.shape[2] != grid.n_cells:
            raise ValidationError.single('schedule', f"expected (steps, 2, {grid.n_cells}), got {schedule.shape}")
        self.schedule = schedule
        self.dt = dt
        self.grid = grid

    def step_control(self, k: int) -> ControlField:
        return ControlField(self.schedule[k, 0], self.schedule[k, 1], self.grid)

    def __call__(self, state: FieldState, t: float, regimes) -> ControlField:
        k = min(int(round(t / self.dt)), self.schedule.shape[0] - 1)
        u1 = np.broadcast_to(self.schedule[k, 0], state.s.shape)
        u2 = np.broadcast_to(self.schedule[k, 1], state.s.shape)
        return ControlField(u1, u2, self.grid)


def bind_policy(policy: PolicyLike, path_indices: Sequence[int], master_seed: int) -> PolicyLike:
    """Bind per-path streams when the policy supports it"""
    binder = getattr(policy, 'for_paths', None)
    return binder(path_indices, master_seed) if binder is not None else policy
