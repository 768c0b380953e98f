"""Reproducible per-path random streams"""

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from numpy.typing import NDArray


N_BROWNIAN = 4  # B1 on S, B2 and B4 on I, B3 on V


class PathStreams(NamedTuple):
    """Independent generators owned by one path"""
    regime: np.random.Generator
    noise: np.random.Generator
    policy: np.random.Generator
    initial: np.random.Generator


def path_streams(master_seed: int, path_index: int) -> PathStreams:
    """Spawn the generators of one path from SeedSequence([master_seed, path_index])"""
    children = np.random.SeedSequence([int(master_seed), int(path_index)]).spawn(4)
    return PathStreams(*(np.random.default_rng(c) for c in children))


@dataclass(frozen=True)
class NoiseDraws:
    """
    Gaussian increments zeta for every step, Brownian motion and cell

    Draws are spatially white and independent across the four Brownian
    motions unless shared_zeta is set.
    """
    master_seed: int
    n_steps: int
    n_cells: int
    shared_zeta: bool = False

    def draw(self, path_index: int) -> NDArray[np.float64]:
        """Array (n_steps, 4, n_cells) for one path"""
        rng = path_streams(self.master_seed, path_index).noise
        return self.draw_from(rng)

    def draw_from(self, rng: np.random.Generator) -> NDArray[np.float64]:
        if self.shared_zeta:
            zeta = rng.standard_normal((self.n_steps, 1, self.n_cells))
            return np.repeat(zeta, N_BROWNIAN, axis=1)
        return rng.standard_normal((self.n_steps, N_BROWNIAN, self.n_cells))

    def draw_batch(self, path_indices: Sequence[int]) -> NDArray[np.float64]:
        """Array (paths, n_steps, 4, n_cells), ordered as path_indices"""
        return np.stack([self.draw(k) for k in path_indices])
