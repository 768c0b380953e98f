"""SIV model: coefficients, state containers and reaction terms"""

from .params import RegimeParams, SivParams, CostParams, Coefficients, DEFAULT_REGIMES, PARAM_NAMES, PROFILE_NAMES
from .state import FieldState, ControlField, COMPONENTS
from .dynamics import (
    Drift,
    NoiseCoefficients,
    Transfer,
    MassDiagnostic,
    reaction_terms,
    noise_terms,
    transfer_terms,
    drift,
    diffusion_coeffs,
    control_transfer,
    running_cost,
    running_cost_density,
    terminal_cost,
    mass_diagnostic,
)

__all__ = [
    'RegimeParams', 'SivParams', 'CostParams', 'Coefficients', 'DEFAULT_REGIMES', 'PARAM_NAMES', 'PROFILE_NAMES',
    'FieldState', 'ControlField', 'COMPONENTS',
    'Drift', 'NoiseCoefficients', 'Transfer', 'MassDiagnostic',
    'reaction_terms', 'noise_terms', 'transfer_terms',
    'drift', 'diffusion_coeffs', 'control_transfer', 'running_cost', 'running_cost_density',
    'terminal_cost', 'mass_diagnostic',
]
