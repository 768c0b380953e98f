"""Empirical marginals, kernel densities and one-dimensional Wasserstein distances"""

from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import trapezoid
from scipy.stats import norm

from ...core.errors import ValidationError
from ...core.integrator import EnsembleResult
from ...core.model import COMPONENTS


Array = NDArray[np.float64]

KDE_SPAN = 4.0


@dataclass(frozen=True, eq=False)
class EmpiricalMarginal:
    """Ensemble samples of one spatially averaged component at one time"""
    samples: Array
    time: float = 0.0
    component: str = 'S'

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).ravel()
        if samples.size == 0:
            raise ValidationError.single('marginal', "needs at least one sample")
        if not np.all(np.isfinite(samples)):
            raise ValidationError.single('marginal', "samples must be finite")
        if self.component not in COMPONENTS:
            raise ValidationError.single('marginal', f"component must be one of {COMPONENTS}, got {self.component!r}")
        object.__setattr__(self, 'samples', samples)

    @classmethod
    def from_ensemble(cls, result: EnsembleResult, record: int, component: str) -> 'EmpiricalMarginal':
        """Spatial means of one component over every path at recorded index `record`"""
        k = COMPONENTS.index(component)
        return cls(result.states[:, record, k].mean(axis=-1), float(result.times[record]), component)

    @property
    def size(self) -> int:
        return self.samples.size


@dataclass(frozen=True, eq=False)
class DensityCurve:
    """Density values on evaluation abscissae"""
    grid: Array
    density: Array
    bandwidth: float

    def integral(self) -> float:
        return float(trapezoid(self.density, self.grid))

    def to_rows(self, component: str, time: float) -> List[Tuple[str, float, float, float]]:
        return [(component, time, float(x), float(d)) for x, d in zip(self.grid, self.density)]


def silverman_bandwidth(samples: ArrayLike) -> float:
    """1.06 sigma n^(-1/5)"""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < 2:
        raise ValidationError.single('bandwidth', "automatic bandwidth needs at least 2 samples")
    sigma = float(np.std(samples, ddof=1))
    if sigma == 0:
        raise ValidationError.single('bandwidth', "samples have zero variance; pass an explicit bandwidth")
    return 1.06 * sigma * samples.size ** (-0.2)


def kde(marginal: EmpiricalMarginal, bandwidth: Union[float, str] = 'auto', n_points: int = 512,
        grid: Optional[ArrayLike] = None) -> DensityCurve:
    """
    Gaussian kernel density estimate

    Args:
        marginal: Samples
        bandwidth: Positive number, or 'auto' for the Silverman rule
        n_points: Evaluation points when grid is omitted
        grid: Evaluation abscissae (default: samples +/- 4 bandwidths)

    Returns:
        DensityCurve
    """
    if bandwidth == 'auto':
        h = silverman_bandwidth(marginal.samples)
    else:
        h = float(bandwidth)
        if not h > 0:
            raise ValidationError.single('bandwidth', f"must be positive, got {bandwidth}")
    if grid is None:
        lo = marginal.samples.min() - KDE_SPAN * h
        hi = marginal.samples.max() + KDE_SPAN * h
        x = np.linspace(lo, hi, n_points)
    else:
        x = np.asarray(grid, dtype=np.float64)
    density = norm.pdf((x[:, None] - marginal.samples[None, :]) / h).mean(axis=1) / h
    return DensityCurve(x, density, h)


def _samples(x: Union[EmpiricalMarginal, ArrayLike]) -> Array:
    if isinstance(x, EmpiricalMarginal):
        return x.samples
    values = np.asarray(x, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValidationError.single('marginal', "needs at least one sample")
    return values


def matched_quantiles(sorted_samples: Array, n: int) -> Array:
    """Resample a sorted sample to n points at the mid-quantiles"""
    if sorted_samples.size == n:
        return sorted_samples
    return np.quantile(sorted_samples, (np.arange(n) + 0.5) / n)


def wasserstein_1d(a: Union[EmpiricalMarginal, ArrayLike], b: Union[EmpiricalMarginal, ArrayLike],
                   p: float = 1.0) -> float:
    """
    Cost of the sorted (comonotone) coupling under |x - y|^p, p in (0, 1]

    This is W_p for p = 1 and an upper bound on W_p for p < 1.

    Samples of different sizes are compared after resampling the larger one
    to the smaller size at mid-quantiles.
    """
    if not 0 < p <= 1:
        raise ValidationError.single('p', f"must lie in (0, 1], got {p}")
    xa = np.sort(_samples(a))
    xb = np.sort(_samples(b))
    n = min(xa.size, xb.size)
    xa = matched_quantiles(xa, n)
    xb = matched_quantiles(xb, n)
    return float(np.mean(np.abs(xa - xb) ** p))


def dp_metric(a: ArrayLike, b: ArrayLike, p: float = 1.0) -> Union[float, Array]:
    """sum_k |a_k - b_k|^p + [regime_a != regime_b] for points (s, i, v, regime)"""
    if not 0 < p <= 1:
        raise ValidationError.single('p', f"must lie in (0, 1], got {p}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] != 4 or b.shape[-1] != 4:
        raise ValidationError.single('point', "points are (s, i, v, regime)")
    distance = np.sum(np.abs(a[..., :3] - b[..., :3]) ** p, axis=-1) + (a[..., 3] != b[..., 3])
    return float(distance) if np.ndim(distance) == 0 else distance
