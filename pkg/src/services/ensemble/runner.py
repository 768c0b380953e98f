"""Ensemble runner dispatching path batches to worker threads"""

import threading
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from typing import Any, Callable, List, Optional, Sequence

from loguru import logger

from ...core.errors import SivError, ValidationError
from ...core.integrator import EnsembleResult, PolicyLike, StepConfig, simulate_batch
from ...core.model import FieldState, SivParams
from ...core.regime import RegimeChain


DEFAULT_BATCH_SIZE = 256


def path_batches(n_paths: int, batch_size: int, start: int = 0) -> List[range]:
    """Contiguous ranges of path indices"""
    if batch_size < 1:
        raise ValidationError.single('batch_size', f"must be positive, got {batch_size}")
    return [range(k, min(k + batch_size, start + n_paths)) for k in range(start, start + n_paths, batch_size)]


class EnsembleRunner:
    """
    Runs path batches on a thread pool and merges them by path index

    Each path derives its generators from (seed, path index), so the merged
    result is identical for any thread count or batch size.
    """

    def __init__(self, params: SivParams, chain: RegimeChain, cfg: StepConfig,
                 threads: int = 1, batch_size: int = DEFAULT_BATCH_SIZE):
        """
        Initialize ensemble runner

        Args:
            params: Regime coefficients
            chain: Regime chain
            cfg: Step configuration (seed included)
            threads: Worker threads
            batch_size: Paths stepped together in one vectorised loop
        """
        if threads < 1:
            raise ValidationError.single('threads', f"must be positive, got {threads}")
        self.params = params
        self.chain = chain
        self.cfg = cfg
        self.threads = int(threads)
        self.batch_size = int(batch_size)
        self._lock = threading.RLock()
        self._completed = 0

        logger.debug(f"EnsembleRunner initialized with {threads} threads, batches of {batch_size}")

    @property
    def completed_paths(self) -> int:
        with self._lock:
            return self._completed

    def _run_batch(self, initial: FieldState, policy: PolicyLike, indices: range, initial_regime: int,
                   record_steps: Optional[Sequence[int]], keep_controls: bool, keep_noise: bool,
                   reducer: Callable[[EnsembleResult], Any]) -> Any:
        if initial.n_paths is not None:
            initial = initial.path(slice(indices.start, indices.stop))
        result = simulate_batch(initial, policy, self.params, self.chain, self.cfg, list(indices),
                                initial_regime, record_steps, keep_controls, keep_noise)
        reduced = reducer(result)
        with self._lock:
            self._completed += len(indices)
        return reduced

    def map_batches(self, initial: FieldState, policy: PolicyLike, n_paths: int,
                    reducer: Callable[[EnsembleResult], Any], initial_regime: int = 0,
                    record_steps: Optional[Sequence[int]] = None, keep_controls: bool = False,
                    keep_noise: bool = False) -> List[Any]:
        """
        Simulate paths 0..n_paths-1 batch by batch and reduce each batch

        Only the reduced values are kept, in batch order, so callers can
        stream large ensembles without holding every path.
        """
        if n_paths < 1:
            raise ValidationError.single('paths', f"must be positive, got {n_paths}")
        if initial.n_paths is not None and initial.n_paths != n_paths:
            raise ValidationError.single('initial', f"batch of {initial.n_paths} states for {n_paths} paths")
        batches = path_batches(n_paths, self.batch_size)
        with self._lock:
            self._completed = 0

        args = (initial_regime, record_steps, keep_controls, keep_noise, reducer)
        if self.threads == 1 or len(batches) == 1:
            return [self._run_batch(initial, policy, b, *args) for b in batches]

        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            futures = [pool.submit(self._run_batch, initial, policy, b, *args) for b in batches]
            parts = []
            for future in futures:
                try:
                    parts.append(future.result())
                except SivError as e:
                    logger.error(f"Ensemble batch failed: {e}")
                    for pending in futures:
                        pending.cancel()
                    raise
            return parts

    def run(self, initial: FieldState, policy: PolicyLike, n_paths: int, initial_regime: int = 0,
            record_steps: Optional[Sequence[int]] = None, keep_controls: bool = False,
            keep_noise: bool = False) -> EnsembleResult:
        """
        Simulate n_paths paths with indices 0..n_paths-1

        Args:
            initial: Single state, or a batch with one row per path
            policy: Control policy
            n_paths: Number of paths
            initial_regime: Regime at t = 0
            record_steps: Step indices to keep (default all)
            keep_controls: Store applied controls
            keep_noise: Store the Gaussian draws

        Returns:
            EnsembleResult ordered by path index
        """
        logger.info(f"Simulating {n_paths} paths ({self.threads} threads)")
        start_time = datetime.now()
        parts = self.map_batches(initial, policy, n_paths, lambda r: r, initial_regime,
                                 record_steps, keep_controls, keep_noise)
        result = EnsembleResult.merge(parts)
        elapsed = (datetime.now() - start_time).total_seconds()
        logger.info(f"Ensemble completed in {elapsed:.2f}s, {int(result.clamp_counts.sum())} clamps")
        return result


def simulate_ensemble(initial: FieldState, policy: PolicyLike, params: SivParams, chain: RegimeChain,
                      cfg: StepConfig, n_paths: int, threads: int = 1, initial_regime: int = 0,
                      record_steps: Optional[Sequence[int]] = None, keep_controls: bool = False,
                      keep_noise: bool = False, batch_size: int = DEFAULT_BATCH_SIZE) -> EnsembleResult:
    """Convenience wrapper around EnsembleRunner.run"""
    runner = EnsembleRunner(params, chain, cfg, threads, batch_size)
    return runner.run(initial, policy, n_paths, initial_regime, record_steps, keep_controls, keep_noise)
