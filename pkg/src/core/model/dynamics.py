"""Reaction terms, noise coefficients and cost functionals of the SIV system"""

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
from numpy.typing import NDArray

from ..errors import ValidationError
from ..grid import SpatialGrid
from .params import Coefficients, CostParams, Regimes, SivParams
from .state import ControlField, FieldState


Array = NDArray[np.float64]


class Drift(NamedTuple):
    f1: Array
    f2: Array
    f3: Array


class NoiseCoefficients(NamedTuple):
    """
    Magnitudes of the four Brownian terms

    g1 = sigma S I enters S with a minus sign (B1), g2a = sigma S I enters I
    with a plus sign (B2), g2b = (1-e) sigma V I enters I with a plus sign (B4)
    and g3 = (1-e) sigma V I enters V with a minus sign (B3).
    """
    g1: Array
    g2a: Array
    g2b: Array
    g3: Array


class Transfer(NamedTuple):
    vaccination: Array   # u1 S
    treatment: Array     # m u2 I / (1 + eta I)


@dataclass(frozen=True)
class MassDiagnostic:
    time: float
    mean_mass: float
    stderr: float
    reference: float

    @property
    def deviation(self) -> float:
        """reference - E int(S + I + V) dx"""
        return self.reference - self.mean_mass

    def to_dict(self) -> dict:
        return {'time': self.time, 'mean_mass': self.mean_mass, 'stderr': self.stderr,
                'reference': self.reference, 'deviation': self.deviation}


def transfer_terms(s: Array, i: Array, u1: Array, u2: Array, c: Coefficients) -> Transfer:
    """Array kernel of control_transfer"""
    return Transfer(u1 * s, c.m * u2 * i / (1.0 + c.eta * i))


def reaction_terms(s: Array, i: Array, v: Array, u1: Array, u2: Array,
                   c: Coefficients, grid: SpatialGrid) -> Drift:
    """Array kernel of drift; arrays share a (..., cells) shape"""
    vaccination, treatment = transfer_terms(s, i, u1, u2, c)
    f1 = ((1.0 - c.p) * c.b + c.alpha * i - c.mu * s - c.beta * s * i - vaccination
          + c.d1 * grid.apply_laplacian(s))
    f2 = (c.beta * s * i + (1.0 - c.e) * c.beta * v * i - (c.mu + c.alpha) * i - treatment
          + c.d2 * grid.apply_laplacian(i))
    f3 = (c.p * c.b - c.mu * v - (1.0 - c.e) * c.beta * v * i + vaccination + treatment
          + c.d3 * grid.apply_laplacian(v))
    return Drift(f1, f2, f3)


def noise_terms(s: Array, i: Array, v: Array, c: Coefficients) -> NoiseCoefficients:
    """Array kernel of diffusion_coeffs"""
    si = c.sigma * s * i
    vi = (1.0 - c.e) * c.sigma * v * i
    return NoiseCoefficients(g1=si, g2a=si, g2b=vi, g3=vi)


def control_transfer(state: FieldState, control: ControlField, params: SivParams, regimes: Regimes) -> Transfer:
    """Vaccination u1 S and saturated treatment m u2 I / (1 + eta I)"""
    return transfer_terms(state.s, state.i, control.u1, control.u2, params.at(regimes))


def drift(state: FieldState, control: ControlField, params: SivParams, regimes: Regimes) -> Drift:
    """
    Drift of the switching reaction-diffusion system

    Args:
        state: Current state (single path or batch)
        control: Control in force
        params: Regime coefficients
        regimes: Regime index or per-path indices

    Returns:
        Drift (f1, f2, f3) including the diffusion terms
    """
    return reaction_terms(state.s, state.i, state.v, control.u1, control.u2,
                          params.at(regimes), state.grid)


def diffusion_coeffs(state: FieldState, params: SivParams, regimes: Regimes) -> NoiseCoefficients:
    """Noise magnitudes, one per Brownian motion"""
    return noise_terms(state.s, state.i, state.v, params.at(regimes))


def running_cost_density(state: FieldState, control: ControlField, cost: CostParams,
                         control_weighting: Optional[float] = None) -> Array:
    """Pointwise A1 S + A2 I + w (tau1 u1^2 + tau2 u2^2)"""
    w = cost.control_weighting if control_weighting is None else control_weighting
    return (cost.a1 * state.s + cost.a2 * state.i
            + w * (cost.tau1 * control.u1 ** 2 + cost.tau2 * control.u2 ** 2))


def running_cost(state: FieldState, control: ControlField, cost: CostParams,
                 control_weighting: Optional[float] = None) -> Union[float, Array]:
    """
    Running cost integrated over the domain

    Args:
        state: State (single or batched)
        control: Control in force
        cost: Weights; control_weighting defaults to cost.control_weighting
        control_weighting: Override of the coefficient on tau u^2

    Returns:
        Scalar, or one value per path
    """
    return state.grid.integrate_values(running_cost_density(state, control, cost, control_weighting))


def terminal_cost(state: FieldState) -> Union[float, Array]:
    """Integral of I at the final time"""
    return state.grid.integrate_values(state.i)


def mass_diagnostic(ensemble: Union[FieldState, Sequence[FieldState]], reference: float) -> MassDiagnostic:
    """
    Monte Carlo estimate of E int(S + I + V) dx against the initial mass

    Args:
        ensemble: Batched state, or a sequence of single-path states at one time
        reference: Initial mass int(S0 + I0 + V0) dx

    Returns:
        MassDiagnostic
    """
    if isinstance(ensemble, FieldState):
        masses = np.atleast_1d(ensemble.total_mass())
        time = ensemble.time
    else:
        if not ensemble:
            raise ValidationError.single('ensemble', "must be nonempty")
        masses = np.array([float(st.total_mass()) for st in ensemble])
        time = ensemble[0].time
    stderr = float(masses.std(ddof=1) / np.sqrt(masses.size)) if masses.size > 1 else 0.0
    return MassDiagnostic(time=float(time), mean_mass=float(masses.mean()), stderr=stderr,
                          reference=float(reference))
