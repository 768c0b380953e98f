"""Tests for the spatial grid, Laplacian and integral"""

import numpy as np
import pytest

from src.core.errors import ValidationError
from src.core.grid import Field, SpatialGrid, integrate, laplacian


class TestSpatialGrid:
    """Partition of [0, length]"""

    def test_nodes_are_cell_centres(self):
        grid = SpatialGrid(4, 2.0)
        assert grid.dx == 0.5
        np.testing.assert_allclose(grid.nodes, [0.25, 0.75, 1.25, 1.75])

    def test_two_cells_rejected(self):
        with pytest.raises(ValidationError) as exc:
            SpatialGrid(2)
        assert exc.value.violations[0][0] == 'grid.n_cells'

    def test_aggregates_violations(self):
        with pytest.raises(ValidationError) as exc:
            SpatialGrid(0, -1.0)
        keys = [k for k, _ in exc.value.violations]
        assert keys == ['grid.n_cells', 'grid.length']

    def test_single_cell_is_homogeneous(self, cell):
        assert cell.is_homogeneous
        assert cell.diffusion_number(0.1, 1.0) == 0.0

    def test_stencil_matrix_matches_apply(self, rng):
        grid = SpatialGrid(16)
        f = rng.normal(size=16)
        np.testing.assert_allclose(grid.stencil_matrix(0.3) @ f, grid.apply_laplacian(f, 0.3), atol=1e-10)

    def test_stencil_matrix_is_symmetric(self):
        m = SpatialGrid(10).stencil_matrix(1.0)
        assert abs(m - m.T).max() == 0


class TestLaplacian:
    """Zero-flux second difference"""

    def test_constant_field(self):
        grid = SpatialGrid(10)
        np.testing.assert_array_equal(laplacian(Field.constant(grid, 3.0), 1.0).values, np.zeros(10))

    def test_zero_diffusivity(self, rng):
        grid = SpatialGrid(10)
        f = Field(rng.normal(size=10), grid)
        np.testing.assert_array_equal(laplacian(f, 0.0).values, np.zeros(10))

    def test_quadratic_interior(self):
        grid = SpatialGrid(64)
        f = Field.from_function(grid, lambda x: x ** 2)
        values = laplacian(f, 1.0).values
        np.testing.assert_allclose(values[1:-1], 2.0, atol=1e-9)

    def test_matches_direct_stencil(self, rng):
        grid = SpatialGrid(12, 3.0)
        f = rng.normal(size=12)
        padded = np.concatenate(([f[0]], f, [f[-1]]))
        expected = 0.7 * (padded[:-2] - 2 * f + padded[2:]) / grid.dx ** 2
        np.testing.assert_allclose(laplacian(Field(f, grid), 0.7).values, expected, rtol=1e-14, atol=1e-12)

    def test_single_cell_is_zero(self, cell):
        np.testing.assert_array_equal(laplacian(Field.constant(cell, 2.0), 1.0).values, [0.0])

    def test_negative_diffusivity_rejected(self, grid8):
        with pytest.raises(ValidationError):
            laplacian(Field.constant(grid8, 1.0), -1.0)

    def test_conservation_and_dissipation(self, rng):
        grid = SpatialGrid(50)
        for _ in range(1000):
            f = Field(rng.normal(size=50), grid)
            lap = laplacian(f, 1.0)
            scale = np.abs(lap.values).max()
            assert abs(integrate(lap)) <= 1e-14 * max(1.0, scale)
            assert np.dot(f.values, lap.values) <= 1e-9

    def test_batched_fields(self, rng):
        grid = SpatialGrid(8)
        f = rng.normal(size=(3, 8))
        batched = grid.apply_laplacian(f, 1.0)
        for row in range(3):
            np.testing.assert_allclose(batched[row], grid.apply_laplacian(f[row], 1.0))


class TestIntegrate:
    """Midpoint rule"""

    def test_constant_one(self):
        assert integrate(Field.constant(SpatialGrid(5), 1.0)) == pytest.approx(1.0)

    def test_constant_on_longer_domain(self):
        assert integrate(Field.constant(SpatialGrid(7, 2.5), 3.0)) == pytest.approx(7.5)

    def test_ramp(self):
        grid = SpatialGrid(1000)
        assert integrate(Field.from_function(grid, lambda x: x)) == pytest.approx(0.5, abs=1e-6)

    def test_batched_returns_per_path(self, grid8):
        values = integrate(Field(np.ones((4, 8)) * np.arange(4)[:, None], grid8))
        np.testing.assert_allclose(values, np.arange(4.0))

    def test_rows_export(self, grid8):
        rows = Field.constant(grid8, 2.0).to_rows()
        assert len(rows) == 8
        assert rows[0] == (pytest.approx(1 / 16), 2.0)
