"""Value-function basis: hat functions in time times quadratic monomials of the mean state"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.stats import qmc

from ...core.errors import ValidationError


Array = NDArray[np.float64]

MONOMIALS = ('1', 'S', 'I', 'V', 'S^2', 'I^2', 'V^2', 'SI', 'SV', 'IV')
LINEAR = ('1', 'S', 'I', 'V')


def monomials(x: Array) -> Array:
    """The 10 monomials of x (..., 3) as (..., 10)"""
    s, i, v = x[..., 0], x[..., 1], x[..., 2]
    return np.stack((np.ones_like(s), s, i, v, s * s, i * i, v * v, s * i, s * v, i * v), axis=-1)


def linear_terms(x: Array) -> Array:
    """(1, S, I, V) of x (..., 3) as (..., 4)"""
    return np.concatenate((np.ones(x.shape[:-1] + (1,)), x), axis=-1)


def _derivative_maps() -> Array:
    """D[a, j, b]: d monomial_j / d x_a expanded in (1, S, I, V)"""
    d = np.zeros((3, len(MONOMIALS), len(LINEAR)))
    # d/dS
    d[0, 1, 0] = 1
    d[0, 4, 1] = 2
    d[0, 7, 2] = 1
    d[0, 8, 3] = 1
    # d/dI
    d[1, 2, 0] = 1
    d[1, 5, 2] = 2
    d[1, 7, 1] = 1
    d[1, 9, 3] = 1
    # d/dV
    d[2, 3, 0] = 1
    d[2, 6, 3] = 2
    d[2, 8, 1] = 1
    d[2, 9, 2] = 1
    return d


DERIVATIVES = _derivative_maps()


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """
    Piecewise-linear interpolation in t between time_knots of coefficients
    on the monomials of the spatially averaged state
    """
    time_knots: Array

    def __post_init__(self):
        knots = np.asarray(self.time_knots, dtype=np.float64)
        if knots.ndim != 1 or knots.size < 2:
            raise ValidationError.single('irl.time_knots', "need at least two knots")
        if knots[0] != 0 or np.any(np.diff(knots) <= 0):
            raise ValidationError.single('irl.time_knots', "knots must start at 0 and increase strictly")
        object.__setattr__(self, 'time_knots', knots)

    @classmethod
    def uniform(cls, t_final: float, n_knots: int = 11) -> 'BasisSpec':
        return cls(np.linspace(0.0, t_final, n_knots))

    @property
    def t_final(self) -> float:
        return float(self.time_knots[-1])

    @property
    def n_knots(self) -> int:
        return self.time_knots.size

    @property
    def size(self) -> int:
        return self.n_knots * len(MONOMIALS)

    def hats(self, t) -> Array:
        """Hat-function weights (..., n_knots); they sum to one on [0, t_final]"""
        t = np.clip(np.asarray(t, dtype=np.float64), 0.0, self.t_final)
        knots = self.time_knots
        right = np.clip(np.searchsorted(knots, t, side='right'), 1, knots.size - 1)
        left = right - 1
        frac = (t - knots[left]) / (knots[right] - knots[left])
        weights = np.zeros(t.shape + (knots.size,))
        np.put_along_axis(weights, left[..., None], (1.0 - frac)[..., None], axis=-1)
        np.put_along_axis(weights, right[..., None], frac[..., None], axis=-1)
        return weights

    def features(self, x: Array, t) -> Array:
        """Design features (..., n_knots * 10) of V at mean states x (..., 3) and times t"""
        h = self.hats(t)
        phi = monomials(x)
        h, phi = np.broadcast_arrays(h[..., :, None], phi[..., None, :])
        return (h * phi).reshape(h.shape[:-2] + (-1,))

    def gradient_features(self, x: Array, t) -> Array:
        """Features (..., n_knots * 4) of a linear-in-state gradient model"""
        h = self.hats(t)
        psi = linear_terms(x)
        h, psi = np.broadcast_arrays(h[..., :, None], psi[..., None, :])
        return (h * psi).reshape(h.shape[:-2] + (-1,))

    def names(self) -> Tuple[str, ...]:
        return tuple(f"V[t={k:.4g}]*{m}" for k in self.time_knots for m in MONOMIALS)

    def gradient_names(self, label: str) -> Tuple[str, ...]:
        return tuple(f"{label}[t={k:.4g}]*{m}" for k in self.time_knots for m in LINEAR)


@dataclass(eq=False)
class ValueApprox:
    """V(x, t) = sum_k sum_j coeffs[k, j] hat_k(t) monomial_j(mean state)"""
    coeffs: Array
    basis: BasisSpec

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if coeffs.shape != (self.basis.n_knots, len(MONOMIALS)):
            raise ValidationError.single('coeffs', f"expected {(self.basis.n_knots, len(MONOMIALS))}, got {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise ValidationError.single('coeffs', "non-finite value coefficients")
        self.coeffs = coeffs

    @classmethod
    def zeros(cls, basis: BasisSpec) -> 'ValueApprox':
        return cls(np.zeros((basis.n_knots, len(MONOMIALS))), basis)

    def __call__(self, x: Array, t) -> Array:
        """Value at mean states x (..., 3)"""
        return self.basis.features(np.asarray(x, dtype=np.float64), t) @ self.coeffs.reshape(-1)

    def gradient_coefficients(self) -> Array:
        """(3, n_knots, 4): dV/dS, dV/dI, dV/dV in the (1, S, I, V) basis"""
        return np.einsum('kj,ajb->akb', self.coeffs, DERIVATIVES)

    def gradient(self, x: Array, t) -> Array:
        """(..., 3) partial derivatives with respect to the mean S, I, V"""
        psi = self.basis.gradient_features(np.asarray(x, dtype=np.float64), t)
        g = self.gradient_coefficients().reshape(3, -1)
        return np.einsum('...f,af->...a', psi, g)

    def to_dict(self) -> dict:
        return {
            'time_knots': self.basis.time_knots.tolist(),
            'monomials': list(MONOMIALS),
            'coeffs': self.coeffs.tolist(),
        }


@dataclass(frozen=True, eq=False)
class ProbeSet:
    """Latin-hypercube states crossed with a uniform time grid"""
    states: Array
    times: Array

    def grid(self) -> Tuple[Array, Array]:
        """States and times broadcast to (n_times, n_states, 3) and (n_times, n_states)"""
        x = np.broadcast_to(self.states, (self.times.size,) + self.states.shape)
        t = np.broadcast_to(self.times[:, None], x.shape[:2])
        return x, t


def probe_states(n: int, seed: int, t_final: float, n_times: int = 11,
                 box: Optional[Sequence[Tuple[float, float]]] = None) -> ProbeSet:
    """
    Fixed probe set for monotonicity and anchoring audits

    Args:
        n: Number of states
        seed: Seed of the Latin-hypercube sampler
        t_final: Horizon
        n_times: Points of the uniform time grid on [0, t_final]
        box: Per-component (lo, hi), default [0, 2] each

    Returns:
        ProbeSet
    """
    if n < 1:
        raise ValidationError.single('irl.probe_states', f"must be positive, got {n}")
    box = ((0.0, 2.0),) * 3 if box is None else box
    lo = np.array([b[0] for b in box], dtype=np.float64)
    hi = np.array([b[1] for b in box], dtype=np.float64)
    unit = qmc.LatinHypercube(d=3, seed=seed).random(n)
    return ProbeSet(qmc.scale(unit, lo, hi), np.linspace(0.0, t_final, n_times))
