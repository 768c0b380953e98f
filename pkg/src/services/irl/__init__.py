"""Off-policy integral reinforcement learning"""

from .basis import BasisSpec, ValueApprox, ProbeSet, probe_states, MONOMIALS, LINEAR
from .policies import UniformBehaviorPolicy, LearnedPolicy
from .learning import (
    IrlConfig,
    TransitionDataset,
    FitDiagnostics,
    IrlIteration,
    IrlResult,
    collect_transitions,
    solve_integral_le,
    irl_policy_iteration,
    probe_controls,
    behavior_policy,
)

__all__ = [
    'BasisSpec', 'ValueApprox', 'ProbeSet', 'probe_states', 'MONOMIALS', 'LINEAR',
    'UniformBehaviorPolicy', 'LearnedPolicy',
    'IrlConfig', 'TransitionDataset', 'FitDiagnostics', 'IrlIteration', 'IrlResult',
    'collect_transitions', 'solve_integral_le', 'irl_policy_iteration', 'probe_controls', 'behavior_policy',
]
