"""Parallel ensemble simulation"""

from .runner import EnsembleRunner, simulate_ensemble, path_batches

__all__ = ['EnsembleRunner', 'simulate_ensemble', 'path_batches']
