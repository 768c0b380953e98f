"""One-dimensional cell-centred grid with zero-flux boundaries"""

from dataclasses import dataclass
from typing import Callable, List, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import sparse

from ..errors import ValidationError


@dataclass(frozen=True)
class SpatialGrid:
    """
    Uniform partition of the domain [0, length] into n_cells cells

    A single cell is the well-mixed domain; its Laplacian vanishes.
    """
    n_cells: int
    length: float = 1.0

    def __post_init__(self):
        violations = []
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            violations.append(('grid.n_cells', f"must be a positive integer, got {self.n_cells}"))
        elif self.n_cells == 2:
            violations.append(('grid.n_cells', "must be 1 (well-mixed) or at least 3"))
        if not (np.isfinite(self.length) and self.length > 0):
            violations.append(('grid.length', f"must be positive, got {self.length}"))
        if violations:
            raise ValidationError(violations)
        object.__setattr__(self, 'n_cells', int(self.n_cells))
        object.__setattr__(self, 'length', float(self.length))

    @property
    def dx(self) -> float:
        return self.length / self.n_cells

    @property
    def nodes(self) -> NDArray[np.float64]:
        """Cell centres"""
        return (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def is_homogeneous(self) -> bool:
        return self.n_cells == 1

    def diffusion_number(self, dt: float, diffusivity: float) -> float:
        """dt * D / dx^2 (zero on the well-mixed grid)"""
        if self.is_homogeneous:
            return 0.0
        return dt * diffusivity / self.dx ** 2

    def apply_laplacian(self, values: NDArray[np.float64], diffusivity: float = 1.0) -> NDArray[np.float64]:
        """
        D * discrete Laplacian along the last axis with mirror ghosts

        Args:
            values: Array of shape (..., n_cells)
            diffusivity: Diffusion coefficient D >= 0

        Returns:
            Array of the same shape
        """
        values = np.asarray(values, dtype=np.float64)
        if self.is_homogeneous or diffusivity == 0:
            return np.zeros_like(values)
        padded = np.concatenate((values[..., :1], values, values[..., -1:]), axis=-1)
        second = padded[..., :-2] - 2.0 * values + padded[..., 2:]
        return diffusivity * second / self.dx ** 2

    def integrate_values(self, values: NDArray[np.float64]) -> Union[float, NDArray[np.float64]]:
        """Midpoint rule along the last axis"""
        total = np.sum(np.asarray(values, dtype=np.float64), axis=-1) * self.dx
        return float(total) if np.ndim(total) == 0 else total

    def stencil_matrix(self, diffusivity: float = 1.0) -> sparse.csr_matrix:
        """Sparse symmetric matrix of apply_laplacian"""
        n = self.n_cells
        if self.is_homogeneous:
            return sparse.csr_matrix((1, 1))
        main = np.full(n, -2.0)
        main[0] = main[-1] = -1.0
        off = np.ones(n - 1)
        scale = diffusivity / self.dx ** 2
        return (scale * sparse.diags([off, main, off], [-1, 0, 1])).tocsr()

    def to_dict(self) -> dict:
        return {'n_cells': self.n_cells, 'length': self.length}


@dataclass(frozen=True)
class Field:
    """Values of one component on a grid (optionally batched over paths)"""
    values: NDArray[np.float64]
    grid: SpatialGrid

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 0 or values.shape[-1] != self.grid.n_cells:
            raise ValidationError.single('values', f"last axis must have {self.grid.n_cells} cells, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError.single('values', "field contains non-finite values")
        object.__setattr__(self, 'values', values)

    @classmethod
    def constant(cls, grid: SpatialGrid, value: float) -> 'Field':
        return cls(np.full(grid.n_cells, float(value)), grid)

    @classmethod
    def from_function(cls, grid: SpatialGrid, func: Callable[[NDArray[np.float64]], ArrayLike]) -> 'Field':
        """Sample func at the cell centres"""
        return cls(np.asarray(func(grid.nodes), dtype=np.float64) * np.ones(grid.n_cells), grid)

    def to_rows(self) -> List[Tuple[float, float]]:
        """(x, value) rows for CSV export"""
        if self.values.ndim != 1:
            raise ValidationError.single('values', "only unbatched fields export as rows")
        return list(zip(self.grid.nodes.tolist(), self.values.tolist()))


def laplacian(f: Field, diffusivity: float) -> Field:
    """
    Zero-flux Laplacian D * (f[k-1] - 2 f[k] + f[k+1]) / dx^2

    Args:
        f: Field to differentiate
        diffusivity: D >= 0

    Returns:
        New Field on the same grid
    """
    if diffusivity < 0:
        raise ValidationError.single('diffusivity', f"must be nonnegative, got {diffusivity}")
    return Field(f.grid.apply_laplacian(f.values, diffusivity), f.grid)


def integrate(f: Field) -> Union[float, NDArray[np.float64]]:
    """Midpoint-rule integral over the domain (one value per path when batched)"""
    return f.grid.integrate_values(f.values)
