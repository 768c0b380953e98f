"""Regime-switching Markov chain and spectral diagnostics"""

from .chain import (
    RegimeChain,
    RegimePath,
    SpectralReport,
    stationary_distribution,
    spectral_report,
    p0_threshold,
    p_grid_report,
    sample_path,
)

__all__ = [
    'RegimeChain', 'RegimePath', 'SpectralReport',
    'stationary_distribution', 'spectral_report', 'p0_threshold',
    'p_grid_report', 'sample_path',
]
