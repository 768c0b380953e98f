"""Milstein forward stepping and backward adjoint stepping"""

from .config import StepConfig, SCHEMES, ADJOINT_SCHEMES, STABILITY_LIMIT
from .noise import NoiseDraws, PathStreams, path_streams, N_BROWNIAN
from .milstein import (
    ClampCounter,
    milstein_state_step,
    step_arrays,
    susceptible_update,
    infected_update,
    vaccinated_update,
)
from .policy import ControlPolicy, ConstantPolicy, OpenLoopPolicy, PolicyLike, bind_policy
from .trajectory import CLAMP_WARN_FRACTION, TrajectoryRecord, EnsembleResult, simulate_batch, simulate_path
from .adjoint import (
    AdjointState,
    adjoint_arrays,
    adjoint_at,
    adjoint_backward_sweep,
    consistent_adjoint_step,
    hamiltonian_gradient,
    literal_adjoint_step,
)

__all__ = [
    'StepConfig', 'SCHEMES', 'ADJOINT_SCHEMES', 'STABILITY_LIMIT',
    'NoiseDraws', 'PathStreams', 'path_streams', 'N_BROWNIAN',
    'ClampCounter', 'milstein_state_step', 'step_arrays',
    'susceptible_update', 'infected_update', 'vaccinated_update',
    'ControlPolicy', 'ConstantPolicy', 'OpenLoopPolicy', 'PolicyLike', 'bind_policy',
    'CLAMP_WARN_FRACTION', 'TrajectoryRecord', 'EnsembleResult', 'simulate_batch', 'simulate_path',
    'AdjointState', 'adjoint_arrays', 'adjoint_at', 'adjoint_backward_sweep',
    'consistent_adjoint_step', 'literal_adjoint_step', 'hamiltonian_gradient',
]
