"""Optimal control: Hamiltonian, projected controls and the forward-backward sweep"""

from .hamiltonian import (
    UNIT_BOX,
    hamiltonian,
    regular_control,
    regular_control_arrays,
    project_control,
    project_arrays,
    check_bounds,
)
from .objective import (
    objective,
    path_costs,
    control_metric,
    evaluate_policy,
    evaluate_constant_control,
    mean_and_stderr,
)
from .sweep import SweepConfig, SweepIteration, ControlSolution, forward_backward_sweep

__all__ = [
    'UNIT_BOX', 'hamiltonian', 'regular_control', 'regular_control_arrays', 'project_control',
    'project_arrays', 'check_bounds',
    'objective', 'path_costs', 'control_metric', 'evaluate_policy', 'evaluate_constant_control', 'mean_and_stderr',
    'SweepConfig', 'SweepIteration', 'ControlSolution', 'forward_backward_sweep',
]
