"""Time-stepping configuration"""

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..errors import ValidationError
from ..grid import SpatialGrid


SCHEMES = ('milstein', 'literal')
ADJOINT_SCHEMES = ('consistent', 'literal')

STABILITY_LIMIT = 0.5


@dataclass(frozen=True)
class StepConfig:
    """
    Step size, horizon and scheme switches

    scheme='literal' and adjoint='literal' select the alternative update lines
    (flipped S correction, adjoint read at the later state); shared_zeta reuses a
    single Gaussian draw for all four Brownian motions in a cell.
    """
    dt: float
    t_final: float
    clamp_negative: bool = True
    rng_seed: int = 0
    scheme: str = 'milstein'
    shared_zeta: bool = False
    adjoint: str = 'consistent'

    def __post_init__(self):
        violations = []
        if not (np.isfinite(self.dt) and self.dt > 0):
            violations.append(('stepping.dt', f"must be positive, got {self.dt}"))
        if not (np.isfinite(self.t_final) and self.t_final > 0):
            violations.append(('stepping.t_final', f"must be positive, got {self.t_final}"))
        if not violations:
            if self.dt > self.t_final:
                violations.append(('stepping.dt', f"dt={self.dt} exceeds t_final={self.t_final}"))
            else:
                steps = self.t_final / self.dt
                if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
                    violations.append(('stepping.t_final', f"t_final={self.t_final} is not a multiple of dt={self.dt}"))
        if self.scheme not in SCHEMES:
            violations.append(('stepping.scheme', f"must be one of {SCHEMES}, got {self.scheme!r}"))
        if self.adjoint not in ADJOINT_SCHEMES:
            violations.append(('stepping.adjoint', f"must be one of {ADJOINT_SCHEMES}, got {self.adjoint!r}"))
        if int(self.rng_seed) != self.rng_seed or self.rng_seed < 0:
            violations.append(('stepping.seed', f"must be a nonnegative integer, got {self.rng_seed}"))
        if violations:
            raise ValidationError(violations)

    @classmethod
    def for_problem(cls, grid: SpatialGrid, max_diffusivity: float, **kwargs) -> 'StepConfig':
        """Construct and check the explicit-diffusion bound in one go"""
        cfg = cls(**kwargs)
        cfg.check_stability(grid, max_diffusivity)
        return cfg

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def step_index(self, t: float) -> int:
        """Grid index nearest to time t"""
        k = int(round(t / self.dt))
        if not 0 <= k <= self.n_steps:
            raise ValidationError.single('time', f"t={t} outside [0, {self.t_final}]")
        return k

    def check_stability(self, grid: SpatialGrid, max_diffusivity: float) -> None:
        """Reject dt * D / dx^2 > 0.5"""
        number = grid.diffusion_number(self.dt, max_diffusivity)
        if number > STABILITY_LIMIT:
            raise ValidationError.single(
                'stepping.dt',
                f"dt*D/dx^2 = {self.dt}*{max_diffusivity}/{grid.dx:.6g}^2 = {number:.4g} exceeds {STABILITY_LIMIT}; "
                f"need dt <= {STABILITY_LIMIT * grid.dx ** 2 / max_diffusivity:.6g}"
            )

    def replace(self, **changes) -> 'StepConfig':
        data = asdict(self)
        data.update(changes)
        return StepConfig(**data)

    def to_dict(self) -> dict:
        return asdict(self)
