"""Spatial discretization"""

from .spatial import SpatialGrid, Field, laplacian, integrate

__all__ = ['SpatialGrid', 'Field', 'laplacian', 'integrate']
