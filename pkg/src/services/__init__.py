"""Pipelines built on the numerical core"""

from .ensemble import EnsembleRunner, simulate_ensemble
from .control import forward_backward_sweep
from .irl import irl_policy_iteration
from .measure import ergodicity_audit

__all__ = ['EnsembleRunner', 'simulate_ensemble', 'forward_backward_sweep', 'irl_policy_iteration',
           'ergodicity_audit']
