"""Forward simulation of single paths and path batches"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from loguru import logger

from ..errors import IntegrationBlowupError, ValidationError
from ..grid import SpatialGrid
from ..model import ControlField, FieldState, SivParams
from ..regime import RegimeChain, RegimePath, sample_path
from .config import StepConfig
from .milstein import step_arrays
from .noise import NoiseDraws, path_streams
from .policy import PolicyLike, bind_policy


BINARY_MAGIC = b'SIVT'
BINARY_VERSION = 1
BINARY_HEADER = np.dtype([('magic', 'S4'), ('version', '<u4'), ('n_cells', '<u8'), ('n_steps', '<u8')])

# Regression bound on clamped component-cells
CLAMP_WARN_FRACTION = 1e-3


@dataclass(eq=False)
class TrajectoryRecord:
    """
    One simulated path

    states has shape (records, 3, cells) with components ordered S, I, V;
    controls and noise_draws are per step, (steps, 2, cells) and (steps, 4, cells).
    """
    times: NDArray[np.float64]
    states: NDArray[np.float64]
    regimes: NDArray[np.int64]
    grid: SpatialGrid
    controls: Optional[NDArray[np.float64]] = None
    noise_draws: Optional[NDArray[np.float64]] = None
    clamp_count: int = 0
    cell_steps: int = 0
    seed: int = 0
    path_index: int = 0
    regime_path: Optional[RegimePath] = None

    def __post_init__(self):
        n = len(self.times)
        if self.states.shape[0] != n or len(self.regimes) != n:
            raise ValidationError.single('trajectory', "times, states and regimes must align")
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError.single('trajectory', "times must be increasing")

    def __len__(self) -> int:
        return len(self.times)

    def state(self, k: int) -> FieldState:
        s, i, v = self.states[k]
        return FieldState(s, i, v, self.grid, float(self.times[k]))

    def control(self, k: int) -> ControlField:
        if self.controls is None:
            raise ValidationError.single('controls', "trajectory was recorded without controls")
        return ControlField(self.controls[k, 0], self.controls[k, 1], self.grid)

    def to_rows(self) -> List[Tuple[float, float, float, float, float, int]]:
        """(t, x, S, I, V, regime) rows for CSV export"""
        x = self.grid.nodes
        rows = []
        for k, t in enumerate(self.times):
            s, i, v = self.states[k]
            for c in range(self.grid.n_cells):
                rows.append((float(t), float(x[c]), float(s[c]), float(i[c]), float(v[c]), int(self.regimes[k])))
        return rows

    def to_bytes(self) -> bytes:
        """Binary dump: header, then little-endian float64 times, S/I/V per step and regimes"""
        header = np.zeros((), dtype=BINARY_HEADER)
        header['magic'] = BINARY_MAGIC
        header['version'] = BINARY_VERSION
        header['n_cells'] = self.grid.n_cells
        header['n_steps'] = len(self.times) - 1
        body = np.concatenate((
            self.times.astype('<f8'),
            self.states.astype('<f8').reshape(-1),
            self.regimes.astype('<f8'),
        ))
        return header.tobytes() + body.astype('<f8').tobytes()

    def write_binary(self, path: Union[str, Path]) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes, length: float = 1.0) -> 'TrajectoryRecord':
        """Inverse of to_bytes (controls and noise are not stored)"""
        header = np.frombuffer(data[:BINARY_HEADER.itemsize], dtype=BINARY_HEADER)[0]
        if header['magic'] != BINARY_MAGIC:
            raise ValidationError.single('binary', "bad magic, not a trajectory dump")
        if header['version'] != BINARY_VERSION:
            raise ValidationError.single('binary', f"unsupported version {header['version']}")
        n_cells = int(header['n_cells'])
        n_records = int(header['n_steps']) + 1
        body = np.frombuffer(data[BINARY_HEADER.itemsize:], dtype='<f8')
        expected = n_records * (2 + 3 * n_cells)
        if body.size != expected:
            raise ValidationError.single('binary', f"body has {body.size} values, expected {expected}")
        times = body[:n_records].copy()
        states = body[n_records:n_records * (1 + 3 * n_cells)].reshape(n_records, 3, n_cells).copy()
        regimes = body[n_records * (1 + 3 * n_cells):].astype(np.int64)
        return cls(times, states, regimes, SpatialGrid(n_cells, length))

    @classmethod
    def read_binary(cls, path: Union[str, Path], length: float = 1.0) -> 'TrajectoryRecord':
        return cls.from_bytes(Path(path).read_bytes(), length)


@dataclass(eq=False)
class EnsembleResult:
    """
    A batch of paths stepped together

    states is (paths, records, 3, cells) at the recorded step indices;
    regimes is (paths, steps + 1) on the full time grid.
    """
    cfg: StepConfig
    grid: SpatialGrid
    path_indices: NDArray[np.int64]
    record_steps: NDArray[np.int64]
    states: NDArray[np.float64]
    regimes: NDArray[np.int64]
    clamp_counts: NDArray[np.int64]
    controls: Optional[NDArray[np.float64]] = None
    noise: Optional[NDArray[np.float64]] = None
    regime_paths: List[RegimePath] = field(default_factory=list)

    @property
    def n_paths(self) -> int:
        return len(self.path_indices)

    @property
    def times(self) -> NDArray[np.float64]:
        return self.record_steps * self.cfg.dt

    @property
    def cell_steps(self) -> int:
        """Component-cell updates per path"""
        return self.cfg.n_steps * 3 * self.grid.n_cells

    @property
    def clamp_fraction(self) -> float:
        """Share of component-cell updates that were clamped at zero"""
        total = self.cell_steps * self.n_paths
        return float(self.clamp_counts.sum()) / total if total else 0.0

    @property
    def is_complete(self) -> bool:
        return len(self.record_steps) == self.cfg.n_steps + 1

    def state_at(self, k: int) -> FieldState:
        """Batched state at recorded index k"""
        s, i, v = (self.states[:, k, c] for c in range(3))
        return FieldState(s, i, v, self.grid, float(self.times[k]))

    def state_at_time(self, t: float) -> FieldState:
        step = self.cfg.step_index(t)
        matches = np.nonzero(self.record_steps == step)[0]
        if not matches.size:
            raise ValidationError.single('time', f"t={t} was not recorded")
        return self.state_at(int(matches[0]))

    def record(self, j: int) -> TrajectoryRecord:
        """Single-path view of path j"""
        return TrajectoryRecord(
            times=self.times.copy(),
            states=self.states[j].copy(),
            regimes=self.regimes[j, self.record_steps].copy(),
            grid=self.grid,
            controls=None if self.controls is None else self.controls[j].copy(),
            noise_draws=None if self.noise is None else self.noise[j].copy(),
            clamp_count=int(self.clamp_counts[j]),
            cell_steps=self.cell_steps,
            seed=self.cfg.rng_seed,
            path_index=int(self.path_indices[j]),
            regime_path=self.regime_paths[j] if self.regime_paths else None,
        )

    @classmethod
    def merge(cls, parts: Sequence['EnsembleResult']) -> 'EnsembleResult':
        """Concatenate batches ordered by path index"""
        if not parts:
            raise ValidationError.single('ensemble', "nothing to merge")
        parts = sorted(parts, key=lambda r: int(r.path_indices[0]) if r.n_paths else -1)
        first = parts[0]

        def cat(name):
            arrays = [getattr(p, name) for p in parts]
            return None if any(a is None for a in arrays) else np.concatenate(arrays)

        return cls(
            cfg=first.cfg, grid=first.grid,
            path_indices=cat('path_indices'), record_steps=first.record_steps,
            states=cat('states'), regimes=cat('regimes'), clamp_counts=cat('clamp_counts'),
            controls=cat('controls'), noise=cat('noise'),
            regime_paths=[rp for p in parts for rp in p.regime_paths],
        )


def simulate_batch(initial: FieldState, policy: PolicyLike, params: SivParams, chain: RegimeChain,
                   cfg: StepConfig, path_indices: Sequence[int], initial_regime: int = 0,
                   record_steps: Optional[Sequence[int]] = None, keep_controls: bool = True,
                   keep_noise: bool = True) -> EnsembleResult:
    """
    Step a batch of paths in one vectorised loop

    Every path owns generators derived from (cfg.rng_seed, path index), so the
    result for a path does not depend on the batch it runs in.

    Args:
        initial: Single state (replicated) or batch with one row per path
        policy: Control policy
        params: Regime coefficients
        chain: Regime chain
        cfg: Step configuration
        path_indices: Global indices of the paths in this batch
        initial_regime: Regime at t = 0
        record_steps: Step indices to keep (default every step)
        keep_controls: Store the applied controls
        keep_noise: Store the Gaussian draws

    Returns:
        EnsembleResult
    """
    if chain.n_states != params.n_regimes:
        raise ValidationError.single('regime', f"chain has {chain.n_states} states but {params.n_regimes} parameter sets")
    grid = initial.grid
    cfg.check_stability(grid, params.max_diffusivity)

    path_indices = np.asarray(path_indices, dtype=np.int64)
    n_paths = len(path_indices)
    if initial.n_paths is None:
        initial = initial.batch(n_paths)
    elif initial.n_paths != n_paths:
        raise ValidationError.single('initial', f"batch of {initial.n_paths} states for {n_paths} paths")

    n_steps = cfg.n_steps
    times = cfg.times
    steps = np.arange(n_steps + 1) if record_steps is None else np.unique(np.asarray(record_steps, dtype=np.int64))
    if steps.size == 0 or steps[0] < 0 or steps[-1] > n_steps:
        raise ValidationError.single('record_steps', f"must lie in 0..{n_steps}")

    draws = NoiseDraws(cfg.rng_seed, n_steps, grid.n_cells, cfg.shared_zeta)
    regime_paths: List[RegimePath] = []
    noise = np.empty((n_paths, n_steps, 4, grid.n_cells))
    for j, index in enumerate(path_indices):
        streams = path_streams(cfg.rng_seed, int(index))
        regime_paths.append(sample_path(chain, initial_regime, cfg.t_final, streams.regime))
        noise[j] = draws.draw_from(streams.noise)
    regimes = np.stack([rp.state_at(times) for rp in regime_paths])

    bound = bind_policy(policy, path_indices.tolist(), cfg.rng_seed)
    record_pos = {int(k): r for r, k in enumerate(steps)}
    states = np.empty((n_paths, len(steps), 3, grid.n_cells))
    controls = np.empty((n_paths, n_steps, 2, grid.n_cells)) if keep_controls else None
    clamp_counts = np.zeros(n_paths, dtype=np.int64)

    s, i, v = initial.s.copy(), initial.i.copy(), initial.v.copy()
    if 0 in record_pos:
        states[:, record_pos[0]] = np.stack((s, i, v), axis=1)

    for k in range(n_steps):
        state = FieldState(s, i, v, grid, float(times[k]))
        control = bound(state, float(times[k]), regimes[:, k])
        u1 = np.broadcast_to(control.u1, s.shape)
        u2 = np.broadcast_to(control.u2, s.shape)
        if controls is not None:
            controls[:, k, 0] = u1
            controls[:, k, 1] = u2
        try:
            s, i, v, negatives = step_arrays(s, i, v, u1, u2, params.at(regimes[:, k]), grid, cfg.dt,
                                             noise[:, k], cfg.scheme, cfg.clamp_negative)
        except IntegrationBlowupError as e:
            logger.error(f"Integration blew up at step {k}: {e}")
            raise e.at_step(k) from None
        clamp_counts += negatives
        if k + 1 in record_pos:
            states[:, record_pos[k + 1]] = np.stack((s, i, v), axis=1)

    total = int(clamp_counts.sum())
    if total > CLAMP_WARN_FRACTION * n_paths * n_steps * 3 * grid.n_cells:
        logger.warning(f"Clamped {total} negative component-cells over {n_paths} paths")
    span = f"{int(path_indices[0])}..{int(path_indices[-1])}" if n_paths else "-"
    logger.debug(f"Simulated paths {span} ({n_steps} steps, {total} clamps)")

    return EnsembleResult(
        cfg=cfg, grid=grid, path_indices=path_indices, record_steps=steps, states=states,
        regimes=regimes, clamp_counts=clamp_counts, controls=controls,
        noise=noise if keep_noise else None, regime_paths=regime_paths,
    )


def simulate_path(initial: FieldState, policy: PolicyLike, params: SivParams, chain: RegimeChain,
                  cfg: StepConfig, path_index: int = 0, initial_regime: int = 0) -> TrajectoryRecord:
    """
    Simulate one path with its regime path sampled first

    Args:
        initial: State at t = 0
        policy: Control policy (state, t, regimes) -> ControlField
        params: Regime coefficients
        chain: Regime chain
        cfg: Step configuration
        path_index: Index used to derive the path's random streams
        initial_regime: Regime at t = 0

    Returns:
        Full TrajectoryRecord
    """
    if initial.n_paths is not None:
        raise ValidationError.single('initial', "simulate_path takes a single (unbatched) state")
    result = simulate_batch(initial, policy, params, chain, cfg, [path_index], initial_regime)
    return result.record(0)
