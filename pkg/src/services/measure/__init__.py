"""Invariant-measure diagnostics"""

from .density import (
    EmpiricalMarginal,
    DensityCurve,
    kde,
    silverman_bandwidth,
    wasserstein_1d,
    dp_metric,
    matched_quantiles,
)
from .audit import MeasureConfig, AuditReport, ergodicity_audit, fit_decay_rate, regime_total_variation

__all__ = [
    'EmpiricalMarginal', 'DensityCurve', 'kde', 'silverman_bandwidth', 'wasserstein_1d', 'dp_metric',
    'matched_quantiles', 'MeasureConfig', 'AuditReport', 'ergodicity_audit', 'fit_decay_rate',
    'regime_total_variation',
]
