"""State and control fields on the spatial grid"""

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from ..errors import ValidationError
from ..grid import Field, SpatialGrid


COMPONENTS = ('S', 'I', 'V')


def _as_cells(values, grid: SpatialGrid, key: str) -> NDArray[np.float64]:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim == 0:
        array = np.full(grid.n_cells, float(array))
    if array.shape[-1] != grid.n_cells or array.ndim > 2:
        raise ValidationError.single(key, f"expected shape (cells,) or (paths, cells) with {grid.n_cells} cells, got {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValidationError.single(key, "contains non-finite values")
    return array


@dataclass(frozen=True, eq=False)
class FieldState:
    """
    Susceptible, infected and vaccinated proportions at one time

    Arrays are (cells,) for a single path or (paths, cells) for a batch.
    """
    s: NDArray[np.float64]
    i: NDArray[np.float64]
    v: NDArray[np.float64]
    grid: SpatialGrid
    time: float = 0.0

    def __post_init__(self):
        s = _as_cells(self.s, self.grid, 's')
        i = _as_cells(self.i, self.grid, 'i')
        v = _as_cells(self.v, self.grid, 'v')
        shape = np.broadcast_shapes(s.shape, i.shape, v.shape)
        object.__setattr__(self, 's', np.broadcast_to(s, shape).copy())
        object.__setattr__(self, 'i', np.broadcast_to(i, shape).copy())
        object.__setattr__(self, 'v', np.broadcast_to(v, shape).copy())

    @classmethod
    def uniform(cls, grid: SpatialGrid, s: float, i: float, v: float, time: float = 0.0) -> 'FieldState':
        """Spatially constant state"""
        return cls(np.full(grid.n_cells, s), np.full(grid.n_cells, i), np.full(grid.n_cells, v), grid, time)

    @property
    def n_paths(self) -> Optional[int]:
        """Batch size, None for a single path"""
        return self.s.shape[0] if self.s.ndim == 2 else None

    @property
    def is_nonnegative(self) -> bool:
        return bool(np.all(self.s >= 0) and np.all(self.i >= 0) and np.all(self.v >= 0))

    def batch(self, n_paths: int) -> 'FieldState':
        """Repeat a single state over n_paths"""
        if self.n_paths is not None:
            raise ValidationError.single('state', "state is already batched")
        s, i, v = (np.tile(a, (n_paths, 1)) for a in (self.s, self.i, self.v))
        return FieldState(s, i, v, self.grid, self.time)

    def path(self, index: Union[int, slice]) -> 'FieldState':
        if self.n_paths is None:
            return self
        return FieldState(self.s[index], self.i[index], self.v[index], self.grid, self.time)

    def stack(self) -> NDArray[np.float64]:
        """Array of shape (..., 3, cells)"""
        return np.stack((self.s, self.i, self.v), axis=-2)

    def fields(self) -> Tuple[Field, Field, Field]:
        return Field(self.s, self.grid), Field(self.i, self.grid), Field(self.v, self.grid)

    def total_mass(self) -> Union[float, NDArray[np.float64]]:
        """Integral of S + I + V (per path when batched)"""
        return self.grid.integrate_values(self.s + self.i + self.v)

    def spatial_mean(self) -> NDArray[np.float64]:
        """Domain averages of (S, I, V), shape (..., 3)"""
        return np.stack([x.mean(axis=-1) for x in (self.s, self.i, self.v)], axis=-1)


@dataclass(frozen=True, eq=False)
class ControlField:
    """
    Vaccination u1 and treatment u2 intensities

    in_box=False marks raw (unprojected) values such as the regular control.
    """
    u1: NDArray[np.float64]
    u2: NDArray[np.float64]
    grid: SpatialGrid
    in_box: bool = True

    def __post_init__(self):
        u1 = _as_cells(self.u1, self.grid, 'u1')
        u2 = _as_cells(self.u2, self.grid, 'u2')
        shape = np.broadcast_shapes(u1.shape, u2.shape)
        u1 = np.broadcast_to(u1, shape).copy()
        u2 = np.broadcast_to(u2, shape).copy()
        if self.in_box:
            for key, u in (('u1', u1), ('u2', u2)):
                if np.any(u < 0) or np.any(u > 1):
                    raise ValidationError.single(key, f"control outside [0, 1] (range {u.min():.6g}..{u.max():.6g})")
        object.__setattr__(self, 'u1', u1)
        object.__setattr__(self, 'u2', u2)

    @classmethod
    def zeros(cls, grid: SpatialGrid) -> 'ControlField':
        return cls(np.zeros(grid.n_cells), np.zeros(grid.n_cells), grid)

    @classmethod
    def constant(cls, grid: SpatialGrid, u1: float, u2: float) -> 'ControlField':
        return cls(np.full(grid.n_cells, u1), np.full(grid.n_cells, u2), grid)

    def stack(self) -> NDArray[np.float64]:
        """Array of shape (..., 2, cells)"""
        return np.stack((self.u1, self.u2), axis=-2)
