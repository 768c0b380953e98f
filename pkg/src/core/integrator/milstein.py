"""Milstein updates of the state system"""

from typing import Dict, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from ..errors import IntegrationBlowupError
from ..grid import SpatialGrid
from ..model import Coefficients, ControlField, FieldState, SivParams, reaction_terms
from ..model.params import Regimes


Array = NDArray[np.float64]
Terms = Dict[str, Array]


class ClampCounter:
    """Running count of negative component-cells zeroed by clamping"""

    def __init__(self):
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)


def noise_increment(diffusion: Array, dt: float, zeta: Array) -> Array:
    """b dW with dW = sqrt(dt) zeta"""
    return diffusion * np.sqrt(dt) * zeta


def milstein_correction(diffusion: Array, diff_derivative: Array, dt: float, zeta: Array) -> Array:
    """0.5 b b' (dW^2 - dt)"""
    return 0.5 * diffusion * diff_derivative * (zeta ** 2 - 1.0) * dt


def susceptible_terms(s: Array, i: Array, v: Array, u1: Array, u2: Array, c: Coefficients,
                      grid: SpatialGrid, dt: float, z1: Array, scheme: str = 'milstein',
                      f1: Optional[Array] = None) -> Terms:
    """Drift, noise and correction increments of S (noise -sigma S I dB1)"""
    if f1 is None:
        f1 = reaction_terms(s, i, v, u1, u2, c, grid).f1
    g = -c.sigma * s * i
    if scheme == 'literal':
        correction = -0.5 * c.sigma ** 2 * s * i ** 2 * (z1 ** 2 - 1.0) * dt
    else:
        correction = milstein_correction(g, -c.sigma * i, dt, z1)
    return {'drift': f1 * dt, 'noise': noise_increment(g, dt, z1), 'milstein': correction}


def infected_terms(s: Array, i: Array, v: Array, u1: Array, u2: Array, c: Coefficients,
                   grid: SpatialGrid, dt: float, z2: Array, z4: Array, scheme: str = 'milstein',
                   f2: Optional[Array] = None) -> Terms:
    """Increments of I (noise sigma S I dB2 + (1-e) sigma V I dB4)"""
    if f2 is None:
        f2 = reaction_terms(s, i, v, u1, u2, c, grid).f2
    ga = c.sigma * s * i
    gb = (1.0 - c.e) * c.sigma * v * i
    noise = noise_increment(ga, dt, z2) + noise_increment(gb, dt, z4)
    if scheme == 'literal':
        # literal form: no (1-e)^2 on the second correction
        correction = (0.5 * c.sigma ** 2 * s ** 2 * i * (z2 ** 2 - 1.0) * dt
                      + 0.5 * c.sigma ** 2 * v ** 2 * i * (z4 ** 2 - 1.0) * dt)
    else:
        correction = (milstein_correction(ga, c.sigma * s, dt, z2)
                      + milstein_correction(gb, (1.0 - c.e) * c.sigma * v, dt, z4))
    return {'drift': f2 * dt, 'noise': noise, 'milstein': correction}


def vaccinated_terms(s: Array, i: Array, v: Array, u1: Array, u2: Array, c: Coefficients,
                     grid: SpatialGrid, dt: float, z3: Array, scheme: str = 'milstein',
                     f3: Optional[Array] = None) -> Terms:
    """Increments of V (noise -(1-e) sigma V I dB3)"""
    if f3 is None:
        f3 = reaction_terms(s, i, v, u1, u2, c, grid).f3
    g = -(1.0 - c.e) * c.sigma * v * i
    if scheme == 'literal':
        correction = -0.5 * (1.0 - c.e) ** 2 * c.sigma ** 2 * v * i ** 2 * (z3 ** 2 - 1.0) * dt
    else:
        correction = milstein_correction(g, -(1.0 - c.e) * c.sigma * i, dt, z3)
    return {'drift': f3 * dt, 'noise': noise_increment(g, dt, z3), 'milstein': correction}


def _apply(x: Array, terms: Terms) -> Array:
    return x + terms['drift'] + terms['noise'] + terms['milstein']


def susceptible_update(s, i, v, u1, u2, c, grid, dt, z1, scheme='milstein') -> Array:
    """S after one step, before clamping"""
    return _apply(s, susceptible_terms(s, i, v, u1, u2, c, grid, dt, z1, scheme))


def infected_update(s, i, v, u1, u2, c, grid, dt, z2, z4, scheme='milstein') -> Array:
    """I after one step, before clamping"""
    return _apply(i, infected_terms(s, i, v, u1, u2, c, grid, dt, z2, z4, scheme))


def vaccinated_update(s, i, v, u1, u2, c, grid, dt, z3, scheme='milstein') -> Array:
    """V after one step, before clamping"""
    return _apply(v, vaccinated_terms(s, i, v, u1, u2, c, grid, dt, z3, scheme))


def step_arrays(s: Array, i: Array, v: Array, u1: Array, u2: Array, c: Coefficients,
                grid: SpatialGrid, dt: float, zeta: Array, scheme: str = 'milstein',
                clamp_negative: bool = True) -> Tuple[Array, Array, Array, Array]:
    """
    Advance raw arrays by one step

    Args:
        s, i, v: State arrays (..., cells)
        u1, u2: Controls broadcastable to the state
        c: Coefficients of the regime in force on each path
        grid: Spatial grid
        dt: Step size
        zeta: Draws (..., 4, cells) ordered B1, B2, B3, B4
        scheme: 'milstein' or 'literal'
        clamp_negative: Zero negative values after the update

    Returns:
        (s, i, v, negatives) where negatives counts negative component-cells per path
    """
    z1, z2, z3, z4 = (zeta[..., k, :] for k in range(4))
    f = reaction_terms(s, i, v, u1, u2, c, grid)
    terms = {
        'S': susceptible_terms(s, i, v, u1, u2, c, grid, dt, z1, scheme, f.f1),
        'I': infected_terms(s, i, v, u1, u2, c, grid, dt, z2, z4, scheme, f.f2),
        'V': vaccinated_terms(s, i, v, u1, u2, c, grid, dt, z3, scheme, f.f3),
    }
    updated = {name: _apply(x, terms[name]) for name, x in (('S', s), ('I', i), ('V', v))}
    for name, values in updated.items():
        if not np.all(np.isfinite(values)):
            raise _blowup(name, terms[name])

    s_new, i_new, v_new = updated['S'], updated['I'], updated['V']
    negatives = (s_new < 0).sum(axis=-1) + (i_new < 0).sum(axis=-1) + (v_new < 0).sum(axis=-1)
    if clamp_negative:
        s_new, i_new, v_new = (np.maximum(x, 0.0) for x in (s_new, i_new, v_new))
    return s_new, i_new, v_new, negatives


def milstein_state_step(state: FieldState, control: ControlField, params: SivParams, regime: Regimes,
                        dt: float, zeta: Array, scheme: str = 'milstein', clamp_negative: bool = True,
                        counter: Optional[ClampCounter] = None) -> FieldState:
    """
    One Milstein step of the switching SIV system

    Args:
        state: State at t
        control: Control held over [t, t + dt]
        params: Regime coefficients
        regime: Regime index (or per-path indices) frozen over the step
        dt: Step size
        zeta: Standard normal draws (..., 4, cells)
        scheme: 'milstein' (consistent corrections) or 'literal'
        clamp_negative: Zero negative values after the update
        counter: Optional ClampCounter incremented by the negatives found

    Returns:
        State at t + dt
    """
    s, i, v, negatives = step_arrays(state.s, state.i, state.v, control.u1, control.u2,
                                     params.at(regime), state.grid, dt,
                                     np.asarray(zeta, dtype=np.float64), scheme, clamp_negative)
    if counter is not None:
        counter.add(np.sum(negatives))
    return FieldState(s, i, v, state.grid, state.time + dt)


def _blowup(component: str, terms: Terms) -> IntegrationBlowupError:
    for name, values in terms.items():
        bad = np.argwhere(~np.isfinite(np.atleast_1d(values)))
        if bad.size:
            return IntegrationBlowupError(component, name, int(bad[0][-1]))
    return IntegrationBlowupError(component, 'state', -1)
