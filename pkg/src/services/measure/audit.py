"""Ergodicity audit over ensembles started from different initial conditions"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from ...core.errors import ValidationError
from ...core.integrator import EnsembleResult
from ...core.model import COMPONENTS
from .density import DensityCurve, EmpiricalMarginal, kde, wasserstein_1d


@dataclass(frozen=True)
class MeasureConfig:
    """Checkpoints and estimator settings of the audit"""
    checkpoints: Tuple[float, ...] = (25.0, 28.0, 30.0)
    cross_times: Tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    p: float = 1.0
    n_paths: int = 10000
    alt_initial: Tuple[float, float, float] = (0.2, 0.5, 0.3)
    kde_points: int = 256
    bandwidth: Any = 'auto'

    def __post_init__(self):
        violations = []
        checkpoints = tuple(float(t) for t in self.checkpoints)
        cross_times = tuple(float(t) for t in self.cross_times)
        for key, times in (('measure.checkpoints', checkpoints), ('measure.cross_times', cross_times)):
            if len(times) < 2:
                violations.append((key, "need at least two times"))
            elif any(b <= a for a, b in zip(times, times[1:])) or times[0] < 0:
                violations.append((key, "times must be nonnegative and increasing"))
        if not 0 < self.p <= 1:
            violations.append(('measure.p', f"must lie in (0, 1], got {self.p}"))
        if int(self.n_paths) != self.n_paths or self.n_paths < 2:
            violations.append(('measure.paths', f"need at least 2 paths, got {self.n_paths}"))
        if len(self.alt_initial) != 3 or any(x < 0 for x in self.alt_initial):
            violations.append(('measure.alt_initial', "need three nonnegative values"))
        if violations:
            raise ValidationError(violations)
        object.__setattr__(self, 'checkpoints', checkpoints)
        object.__setattr__(self, 'cross_times', cross_times)

    @property
    def horizon(self) -> float:
        return max(self.checkpoints[-1], self.cross_times[-1])

    @property
    def record_times(self) -> Tuple[float, ...]:
        """Sorted union of the checkpoint and cross times"""
        return tuple(sorted(set(self.checkpoints) | set(self.cross_times)))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class AuditReport:
    """
    Distances between marginals of spatially averaged components

    stationarity[label][c] holds W between consecutive checkpoints of one run;
    cross[c] holds W between the first two runs at each cross time; the
    surrogate adds the componentwise distances and the regime disagreement.
    """
    checkpoints: List[float]
    p: float
    cross_times: List[float] = field(default_factory=list)
    stationarity: Dict[str, Dict[str, List[float]]] = field(default_factory=dict)
    spread: Dict[str, Dict[str, float]] = field(default_factory=dict)
    cross: Dict[str, List[float]] = field(default_factory=dict)
    regime_disagreement: List[float] = field(default_factory=list)
    surrogate: List[float] = field(default_factory=list)
    decay_rate: Optional[float] = None
    moment_bound: Dict[str, float] = field(default_factory=dict)
    densities: Dict[str, Dict[str, List[Optional[DensityCurve]]]] = field(default_factory=dict)

    def max_stationarity(self) -> float:
        values = [d for run in self.stationarity.values() for dist in run.values() for d in dist]
        return max(values) if values else 0.0

    def cross_ratio(self, t_from: float, t_to: float) -> Dict[str, Optional[float]]:
        """
        Per-component cross distance at t_to relative to t_from

        Returns:
            Ratios keyed by component, None where the distance at t_from is zero
        """
        a = self._cross_index(t_from)
        b = self._cross_index(t_to)
        return {c: (d[b] / d[a] if d[a] > 0 else None) for c, d in self.cross.items()}

    def contraction(self) -> Dict[str, Optional[float]]:
        """Cross ratio between the first positive cross time and the last one"""
        positive = [t for t in self.cross_times if t > 0]
        if len(positive) < 2:
            return {c: None for c in self.cross}
        return self.cross_ratio(positive[0], positive[-1])

    def _cross_index(self, t: float) -> int:
        for k, s in enumerate(self.cross_times):
            if abs(s - t) <= 1e-9 * max(1.0, abs(t)):
                return k
        raise ValidationError.single('measure.cross_times', f"t={t} is not a cross time")

    def density_rows(self) -> List[Tuple[str, str, float, float, float]]:
        """(run, component, t, x, density) rows"""
        rows = []
        for label, per_component in self.densities.items():
            for component, curves in per_component.items():
                for t, curve in zip(self.checkpoints, curves):
                    if curve is not None:
                        rows.extend((label,) + row for row in curve.to_rows(component, t))
        return rows

    def to_dict(self) -> Dict[str, Any]:
        return {
            'checkpoints': self.checkpoints,
            'cross_times': self.cross_times,
            'p': self.p,
            'stationarity': self.stationarity,
            'spread': self.spread,
            'cross': self.cross,
            'contraction': self.contraction(),
            'regime_disagreement': self.regime_disagreement,
            'surrogate': self.surrogate,
            'decay_rate': self.decay_rate,
            'moment_bound': self.moment_bound,
        }


def _record_index(result: EnsembleResult, t: float, key: str = 'measure.checkpoints') -> int:
    step = result.cfg.step_index(t)
    matches = np.nonzero(result.record_steps == step)[0]
    if not matches.size:
        raise ValidationError.single(key, f"t={t} was not recorded")
    return int(matches[0])


def _density(marginal: EmpiricalMarginal, bandwidth: Any, n_points: int) -> Optional[DensityCurve]:
    try:
        return kde(marginal, bandwidth, n_points)
    except ValidationError as e:
        logger.warning(f"No density for {marginal.component} at t={marginal.time}: {e}")
        return None


def regime_total_variation(a: np.ndarray, b: np.ndarray, n_states: int) -> float:
    """Disagreement probability of the optimal coupling of two empirical regime laws"""
    fa = np.bincount(a, minlength=n_states) / a.size
    fb = np.bincount(b, minlength=n_states) / b.size
    return 0.5 * float(np.abs(fa - fb).sum())


def fit_decay_rate(times: Sequence[float], distances: Sequence[float]) -> Optional[float]:
    """Rate r of distance ~ C exp(-r t) by log-linear least squares"""
    t = np.asarray(times, dtype=np.float64)
    d = np.asarray(distances, dtype=np.float64)
    keep = d > 0
    if keep.sum() < 2:
        return None
    slope, _ = np.polyfit(t[keep], np.log(d[keep]), 1)
    return float(-slope)


def ergodicity_audit(runs: Mapping[str, EnsembleResult], checkpoints: Sequence[float], p: float = 1.0,
                     kde_points: int = 256, bandwidth: Any = 'auto',
                     cross_times: Optional[Sequence[float]] = None) -> AuditReport:
    """
    Stationarity, cross-initial contraction and moment bounds of ensemble marginals

    Args:
        runs: Ensembles keyed by label, from at least two initial conditions; each must
              record the checkpoint steps and the cross-time steps
        checkpoints: At least two increasing times
        p: Exponent of the |x - y|^p cost and of the moments
        kde_points: Evaluation points of each density curve
        bandwidth: KDE bandwidth or 'auto'
        cross_times: Times of the cross-initial distances and the decay fit
                     (default: the checkpoints)

    Returns:
        AuditReport
    """
    if len(runs) < 2:
        raise ValidationError.single('runs', "need ensembles from at least two initial conditions")
    if len(checkpoints) < 2:
        raise ValidationError.single('measure.checkpoints', "need at least two checkpoint times")
    checkpoints = [float(t) for t in checkpoints]
    cross_times = list(checkpoints) if cross_times is None else [float(t) for t in cross_times]
    if len(cross_times) < 2:
        raise ValidationError.single('measure.cross_times', "need at least two cross times")
    labels = list(runs)
    report = AuditReport(checkpoints=checkpoints, p=p, cross_times=cross_times)

    marginals: Dict[str, Dict[str, List[EmpiricalMarginal]]] = {}
    for label, result in runs.items():
        indices = [_record_index(result, t) for t in checkpoints]
        marginals[label] = {c: [EmpiricalMarginal.from_ensemble(result, k, c) for k in indices] for c in COMPONENTS}
        report.stationarity[label] = {
            c: [wasserstein_1d(a, b, p) for a, b in zip(ms, ms[1:])] for c, ms in marginals[label].items()
        }
        report.spread[label] = {c: float(np.std(ms[0].samples)) for c, ms in marginals[label].items()}
        report.densities[label] = {
            c: [_density(m, bandwidth, kde_points) for m in ms] for c, ms in marginals[label].items()
        }
        means = result.states[:, indices].mean(axis=-1)
        report.moment_bound[label] = float(np.max(np.mean(np.sum(np.abs(means) ** p, axis=-1), axis=0)))

    first, second = runs[labels[0]], runs[labels[1]]
    cross_a = [_record_index(first, t, 'measure.cross_times') for t in cross_times]
    cross_b = [_record_index(second, t, 'measure.cross_times') for t in cross_times]
    n_states = int(max(first.regimes.max(), second.regimes.max())) + 1
    for c in COMPONENTS:
        report.cross[c] = [wasserstein_1d(EmpiricalMarginal.from_ensemble(first, ka, c),
                                          EmpiricalMarginal.from_ensemble(second, kb, c), p)
                           for ka, kb in zip(cross_a, cross_b)]
    for t in cross_times:
        ra = first.regimes[:, first.cfg.step_index(t)]
        rb = second.regimes[:, second.cfg.step_index(t)]
        report.regime_disagreement.append(regime_total_variation(ra, rb, n_states))
    report.surrogate = [sum(report.cross[c][k] for c in COMPONENTS) + report.regime_disagreement[k]
                        for k in range(len(cross_times))]
    report.decay_rate = fit_decay_rate(cross_times, report.surrogate)

    logger.info(f"Ergodicity audit: max stationarity W={report.max_stationarity():.4g}, "
                f"cross surrogate {['%.4g' % d for d in report.surrogate]}, decay rate {report.decay_rate}")
    return report
