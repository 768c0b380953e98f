"""Continuous-time Markov chain for regime switching and its spectral diagnostics"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from loguru import logger

from ..errors import EigenSolverError, ReducibleGeneratorError, ValidationError


SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]

# Row-sum tolerance relative to the largest rate
CONSERVATIVE_RTOL = 1e-12
EIGEN_RESIDUAL_RTOL = 1e-10


@dataclass(frozen=True)
class RegimeChain:
    """Finite-state CTMC given by its generator Q (rates per year)"""
    generator: NDArray[np.float64]

    def __post_init__(self):
        q = np.array(self.generator, dtype=np.float64)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] == 0:
            raise ValidationError.single('generator', f"must be a non-empty square matrix, got shape {q.shape}")
        if not np.all(np.isfinite(q)):
            raise ValidationError.single('generator', "entries must be finite")

        off = q - np.diag(np.diag(q))
        violations = []
        if np.any(off < 0):
            rows, cols = np.nonzero(off < 0)
            violations.append(('generator', f"negative off-diagonal rates at {list(zip(rows.tolist(), cols.tolist()))}"))
        scale = max(1.0, float(np.max(np.abs(q))))
        row_sums = q.sum(axis=1)
        bad = np.nonzero(np.abs(row_sums) > CONSERVATIVE_RTOL * scale * q.shape[0])[0]
        if bad.size:
            violations.append(('generator', f"rows {bad.tolist()} do not sum to zero (sums {row_sums[bad].tolist()})"))
        if violations:
            raise ValidationError(violations)

        q.setflags(write=False)
        object.__setattr__(self, 'generator', q)

        components = self.strong_components()
        if len(components) > 1:
            raise ReducibleGeneratorError(components)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> 'RegimeChain':
        """Build from row-major nested lists (config format)"""
        return cls(np.asarray(rows, dtype=np.float64))

    @property
    def n_states(self) -> int:
        return self.generator.shape[0]

    def exit_rates(self) -> NDArray[np.float64]:
        """-q_ii for every state"""
        return -np.diag(self.generator)

    def strong_components(self) -> List[List[int]]:
        """Strongly connected components of the positive-rate digraph"""
        off = self.generator - np.diag(np.diag(self.generator))
        graph = csr_matrix((off > 0).astype(np.int8))
        n_comp, labels = connected_components(graph, directed=True, connection='strong')
        return [np.nonzero(labels == k)[0].tolist() for k in range(n_comp)]

    def transition_matrix(self, t: float) -> NDArray[np.float64]:
        """P(t) = exp(Qt)"""
        return linalg.expm(self.generator * t)


@dataclass(frozen=True)
class RegimePath:
    """Piecewise-constant regime trajectory on [0, horizon)"""
    jump_times: NDArray[np.float64]
    states: NDArray[np.int64]
    horizon: float

    def __post_init__(self):
        jumps = np.asarray(self.jump_times, dtype=np.float64)
        states = np.asarray(self.states, dtype=np.int64)
        if states.size != jumps.size + 1:
            raise ValidationError.single('states', "need exactly one state per segment")
        if jumps.size and (np.any(np.diff(jumps) <= 0) or jumps[0] <= 0 or jumps[-1] >= self.horizon):
            raise ValidationError.single('jump_times', "must be strictly increasing inside (0, horizon)")
        if np.any(states[1:] == states[:-1]):
            raise ValidationError.single('states', "consecutive segments must differ")
        object.__setattr__(self, 'jump_times', jumps)
        object.__setattr__(self, 'states', states)

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    def state_at(self, t: ArrayLike) -> NDArray[np.int64]:
        """Regime in force at time(s) t (right-continuous)"""
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=np.float64), side='right')
        return self.states[idx]

    def segments(self) -> List[tuple]:
        """(t_start, t_end, state) for every segment"""
        edges = np.concatenate(([0.0], self.jump_times, [self.horizon]))
        return [(float(edges[k]), float(edges[k + 1]), int(s)) for k, s in enumerate(self.states)]

    def occupation_fractions(self, n_states: int) -> NDArray[np.float64]:
        """Fraction of [0, horizon) spent in each state"""
        fractions = np.zeros(n_states)
        for start, end, state in self.segments():
            fractions[state] += end - start
        return fractions / self.horizon

    def to_rows(self) -> List[tuple]:
        """CSV rows with columns (t_start, t_end, state)"""
        return self.segments()


@dataclass(frozen=True)
class SpectralReport:
    """Perturbed generator Q_p and its Perron eigenpair"""
    p_exponent: float
    rho: NDArray[np.float64]
    q_p: NDArray[np.float64]
    eta_p: float
    xi_p: NDArray[np.float64]
    p0: float
    stationary: NDArray[np.float64] = field(default=None)
    mean_growth_negative: bool = False
    eta_positive: bool = False

    def to_dict(self) -> dict:
        return {
            'p': self.p_exponent,
            'rho': self.rho.tolist(),
            'q_p': self.q_p.tolist(),
            'eta_p': self.eta_p,
            'xi_p': self.xi_p.tolist(),
            'p0': self.p0,
            'stationary': None if self.stationary is None else self.stationary.tolist(),
            'mean_growth_negative': self.mean_growth_negative,
            'eta_positive': self.eta_positive,
        }


def stationary_distribution(chain: RegimeChain) -> NDArray[np.float64]:
    """
    Stationary law of the chain by Grassmann-Taksar-Heyman elimination

    GTH never subtracts, so every entry stays positive and the residual
    ||pi Q||_inf sits at rounding level.

    Args:
        chain: Irreducible conservative chain

    Returns:
        Probability vector pi with pi Q = 0
    """
    n = chain.n_states
    if n == 1:
        return np.ones(1)

    a = np.array(chain.generator, dtype=np.float64)
    np.fill_diagonal(a, 0.0)

    for k in range(n - 1, 0, -1):
        out_rate = a[k, :k].sum()
        a[:k, k] /= out_rate
        a[:k, :k] += np.outer(a[:k, k], a[k, :k])

    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ a[:k, k]
    pi /= pi.sum()

    residual = float(np.max(np.abs(pi @ chain.generator)))
    logger.debug(f"Stationary distribution {pi.tolist()} (residual {residual:.3e})")
    return pi


def p0_threshold(chain: RegimeChain, rho: ArrayLike) -> float:
    """
    Admissible moment-exponent cap 1 ^ min_{rho_i > 0} (-2 q_ii / rho_i)

    Args:
        chain: Regime chain
        rho: Per-regime growth rates

    Returns:
        p0 (1 when no rho_i is positive)
    """
    rho = _as_rho(chain, rho)
    positive = rho > 0
    if not np.any(positive):
        return 1.0
    ratios = -2.0 * np.diag(chain.generator)[positive] / rho[positive]
    return float(min(1.0, ratios.min()))


def spectral_report(chain: RegimeChain, rho: ArrayLike, p: float) -> SpectralReport:
    """
    Spectrum of Q_p = Q + (p/2) diag(rho)

    Args:
        chain: Regime chain
        rho: Per-regime growth rates
        p: Moment exponent, p > 0

    Returns:
        SpectralReport with eta_p and the positive eigenvector xi_p
    """
    if not p > 0:
        raise ValidationError.single('p', f"must be positive, got {p}")
    rho = _as_rho(chain, rho)
    q_p = chain.generator + 0.5 * p * np.diag(rho)

    try:
        eigenvalues, eigenvectors = linalg.eig(q_p)
    except linalg.LinAlgError as e:
        # LAPACK's QR iteration cap is 30 sweeps per eigenvalue
        raise EigenSolverError(f"eigen-decomposition of Q_p failed: {e}", 30 * chain.n_states) from e

    top = int(np.argmax(eigenvalues.real))
    eta_p = float(-eigenvalues[top].real)
    xi = np.real(eigenvectors[:, top])
    xi = xi * np.sign(xi[np.argmax(np.abs(xi))])
    xi = xi / np.linalg.norm(xi)

    if not np.all(xi > 0):
        raise EigenSolverError(f"Perron eigenvector is not strictly positive: {xi.tolist()}", 30 * chain.n_states)

    residual = np.linalg.norm(q_p @ xi + eta_p * xi)
    if residual > EIGEN_RESIDUAL_RTOL * max(1.0, np.linalg.norm(q_p, 2)):
        raise EigenSolverError(f"eigenpair residual {residual:.3e} exceeds tolerance", 30 * chain.n_states)

    pi = stationary_distribution(chain)
    hypothesis = bool(pi @ rho < 0)
    if not hypothesis:
        logger.warning(f"sum(pi * rho) = {pi @ rho:.4g} >= 0: moment contraction hypothesis fails")

    return SpectralReport(
        p_exponent=float(p), rho=rho, q_p=q_p, eta_p=eta_p, xi_p=xi,
        p0=p0_threshold(chain, rho), stationary=pi,
        mean_growth_negative=hypothesis, eta_positive=eta_p > 0,
    )


def p_grid_report(chain: RegimeChain, rho: ArrayLike, n_points: int = 20) -> List[SpectralReport]:
    """Spectral reports on a uniform p-grid over (0, p0]"""
    p0 = p0_threshold(chain, rho)
    return [spectral_report(chain, rho, p) for p in np.linspace(p0 / n_points, p0, n_points)]


def sample_path(chain: RegimeChain, initial: int, horizon: float, rng_seed: SeedLike = None) -> RegimePath:
    """
    Exact (Gillespie) simulation of the chain up to the horizon

    Args:
        chain: Regime chain
        initial: Starting regime index (0-based)
        horizon: Final time in years
        rng_seed: Seed or Generator; the path is reproducible from it

    Returns:
        RegimePath
    """
    if not horizon > 0:
        raise ValidationError.single('horizon', f"must be positive, got {horizon}")
    if not 0 <= initial < chain.n_states:
        raise ValidationError.single('initial', f"regime {initial} outside 0..{chain.n_states - 1}")

    rng = np.random.default_rng(rng_seed)
    rates = chain.exit_rates()
    jumps: List[float] = []
    states = [int(initial)]
    t = 0.0

    while True:
        current = states[-1]
        rate = rates[current]
        if rate <= 0:
            break  # absorbing
        t += rng.exponential(1.0 / rate)
        if t >= horizon:
            break
        probs = np.array(chain.generator[current], dtype=np.float64)
        probs[current] = 0.0
        probs /= rate
        jumps.append(t)
        states.append(int(rng.choice(chain.n_states, p=probs)))

    return RegimePath(np.asarray(jumps), np.asarray(states), float(horizon))


def _as_rho(chain: RegimeChain, rho: ArrayLike) -> NDArray[np.float64]:
    rho = np.asarray(rho, dtype=np.float64).reshape(-1)
    if rho.size != chain.n_states:
        raise ValidationError.single('rho', f"expected {chain.n_states} entries, got {rho.size}")
    return rho
