"""Hamiltonian, regular and projected controls"""

from typing import Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from ...core.errors import ValidationError
from ...core.grid import Field
from ...core.integrator import AdjointState
from ...core.model import (
    Coefficients,
    ControlField,
    CostParams,
    FieldState,
    SivParams,
    diffusion_coeffs,
    drift,
    running_cost_density,
)
from ...core.model.params import Regimes


Array = NDArray[np.float64]
Bounds = Tuple[Tuple[float, float], Tuple[float, float]]

UNIT_BOX: Bounds = ((0.0, 1.0), (0.0, 1.0))

# Lyapunov weighting: dH/du = 0 gives the regular control exactly
HAMILTONIAN_WEIGHTING = 1.0


def hamiltonian(state: FieldState, control: ControlField, adjoint: AdjointState, cost: CostParams,
                params: SivParams, regime: Regimes) -> Field:
    """
    Pointwise H = f.p + sigma*.q + L

    sigma* = (-sigma S I, sigma S I + (1-e) sigma V I, -(1-e) sigma V I) is the
    noise loading of each component and L the running-cost density with
    the tau u^2 weighting.

    Args:
        state: State (single or batched)
        control: Control in force
        adjoint: Costates p and martingale fields q
        cost: Cost weights
        params: Regime coefficients
        regime: Regime index or per-path indices

    Returns:
        Field of Hamiltonian values
    """
    f = drift(state, control, params, regime)
    g = diffusion_coeffs(state, params, regime)
    value = (f.f1 * adjoint.p1 + f.f2 * adjoint.p2 + f.f3 * adjoint.p3
             - g.g1 * adjoint.q1 + (g.g2a + g.g2b) * adjoint.q2 - g.g3 * adjoint.q3
             + running_cost_density(state, control, cost, HAMILTONIAN_WEIGHTING))
    return Field(value, state.grid)


def regular_control_arrays(s: Array, i: Array, p1: Array, p2: Array, p3: Array,
                           c: Coefficients, cost: CostParams) -> Tuple[Array, Array]:
    """u1 = (p1 - p3) S / (2 tau1), u2 = (p2 - p3) m I / (2 tau2 (1 + eta I))"""
    u1 = (p1 - p3) * s / (2.0 * cost.tau1)
    u2 = (p2 - p3) * c.m * i / (2.0 * cost.tau2 * (1.0 + c.eta * i))
    return u1, u2


def regular_control(state: FieldState, adjoint: AdjointState, cost: CostParams,
                    params: SivParams, regime: Regimes) -> ControlField:
    """Stationary point of the Hamiltonian in u, without clamping"""
    u1, u2 = regular_control_arrays(state.s, state.i, adjoint.p1, adjoint.p2, adjoint.p3,
                                    params.at(regime), cost)
    return ControlField(u1, u2, state.grid, in_box=False)


def check_bounds(bounds: Sequence[Sequence[float]]) -> Bounds:
    """Validate [lo, hi] pairs inside [0, 1]"""
    if len(bounds) != 2:
        raise ValidationError.single('bounds', "need one [lo, hi] pair per control")
    violations = []
    for name, pair in zip(('u1_bounds', 'u2_bounds'), bounds):
        lo, hi = (float(x) for x in pair)
        if not 0.0 <= lo <= hi <= 1.0:
            violations.append((f"sweep.{name}", f"need 0 <= lo <= hi <= 1, got [{lo}, {hi}]"))
    if violations:
        raise ValidationError(violations)
    return (float(bounds[0][0]), float(bounds[0][1])), (float(bounds[1][0]), float(bounds[1][1]))


def project_arrays(u: Array, bounds: Bounds = UNIT_BOX) -> Array:
    """Clamp a stacked control (..., 2, cells) into bounds"""
    lo = np.array([bounds[0][0], bounds[1][0]])[:, None]
    hi = np.array([bounds[0][1], bounds[1][1]])[:, None]
    return np.clip(u, lo, hi)


def project_control(raw: ControlField, bounds: Sequence[Sequence[float]] = UNIT_BOX) -> ControlField:
    """u* = max(lo, min(hi, raw)) componentwise"""
    box = check_bounds(bounds)
    u1 = np.clip(raw.u1, *box[0])
    u2 = np.clip(raw.u2, *box[1])
    return ControlField(u1, u2, raw.grid)
