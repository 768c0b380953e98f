"""Regime-indexed SIV coefficients and cost weights"""

from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Mapping, NamedTuple, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from ..errors import ValidationError


PARAM_NAMES = ('p', 'b', 'beta', 'mu', 'alpha', 'e', 'sigma', 'm', 'eta', 'd1', 'd2', 'd3')
PROFILE_NAMES = PARAM_NAMES[:9]

Regimes = Union[int, NDArray[np.int64]]


@dataclass(frozen=True)
class RegimeParams:
    """Model coefficients of one regime (rates per year)"""
    p: float          # vaccination-at-birth fraction
    b: float          # birth rate
    beta: float       # transmission
    mu: float         # natural death
    alpha: float      # recovery
    e: float          # vaccine effectiveness
    sigma: float      # noise intensity
    m: float          # cure rate
    eta: float        # treatment delay
    d1: float = 0.01
    d2: float = 0.01
    d3: float = 0.01

    def __post_init__(self):
        violations = []
        for name in PARAM_NAMES:
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                violations.append((name, f"must be finite and nonnegative, got {value}"))
        for name in ('p', 'e'):
            if getattr(self, name) > 1:
                violations.append((name, f"must lie in [0, 1], got {getattr(self, name)}"))
        if violations:
            raise ValidationError(violations)

    @property
    def max_diffusivity(self) -> float:
        return max(self.d1, self.d2, self.d3)

    def replace(self, **changes) -> 'RegimeParams':
        data = asdict(self)
        data.update(changes)
        return RegimeParams(**data)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], prefix: str = '') -> 'RegimeParams':
        unknown = sorted(set(data) - set(PARAM_NAMES))
        if unknown:
            raise ValidationError([(f"{prefix}{k}", "unknown parameter") for k in unknown])
        missing = [k for k in PARAM_NAMES[:9] if k not in data]
        if missing:
            raise ValidationError([(f"{prefix}{k}", "missing") for k in missing])
        try:
            return cls(**{k: float(v) for k, v in data.items()})
        except ValidationError as e:
            raise ValidationError([(f"{prefix}{k}", msg) for k, msg in e.violations]) from None


class Coefficients(NamedTuple):
    """RegimeParams gathered per path; every field broadcasts against (..., cells)"""
    p: Any
    b: Any
    beta: Any
    mu: Any
    alpha: Any
    e: Any
    sigma: Any
    m: Any
    eta: Any
    d1: Any
    d2: Any
    d3: Any


# Default coefficients of the two-regime setting (rates per year)
DEFAULT_REGIMES = (
    RegimeParams(p=0.5, b=4.0, beta=0.02, mu=0.04, alpha=0.001, e=0.8, sigma=0.035, m=0.01, eta=1.03),
    RegimeParams(p=0.6, b=5.0, beta=0.04, mu=0.05, alpha=0.002, e=0.9, sigma=0.036, m=0.02, eta=1.05),
)


@dataclass(frozen=True, eq=False)
class SivParams:
    """
    One RegimeParams per regime plus optional per-cell coefficient profiles

    A profile maps a reaction or noise coefficient name (p, b, beta, mu, alpha,
    e, sigma, m, eta) to a per-cell multiplier applied in every regime; an absent
    name means spatially constant. Diffusivities stay scalar per regime.
    """
    regimes: Tuple[RegimeParams, ...]
    cell_profiles: Optional[Mapping[str, Any]] = None

    def __post_init__(self):
        regimes = tuple(self.regimes)
        if not regimes:
            raise ValidationError.single('regime', "at least one regime is required")
        object.__setattr__(self, 'regimes', regimes)
        profiles = {}
        violations = []
        for name, values in (self.cell_profiles or {}).items():
            key = f"model.cell_profiles.{name}"
            if name not in PROFILE_NAMES:
                violations.append((key, f"no per-cell profile for {name!r}; allowed: {PROFILE_NAMES}"))
                continue
            profile = np.asarray(values, dtype=np.float64).reshape(-1)
            if profile.size == 0 or np.any(profile < 0) or not np.all(np.isfinite(profile)):
                violations.append((key, "must be a nonempty list of finite nonnegative multipliers"))
                continue
            if name in ('p', 'e') and profile.max() * max(getattr(r, name) for r in regimes) > 1:
                violations.append((key, f"scaled {name} leaves [0, 1]"))
                continue
            profile.setflags(write=False)
            profiles[name] = profile
        if violations:
            raise ValidationError(violations)
        object.__setattr__(self, 'cell_profiles', profiles)
        table = np.array([[getattr(r, n) for n in PARAM_NAMES] for r in regimes], dtype=np.float64)
        table.setflags(write=False)
        object.__setattr__(self, '_table', table)

    @classmethod
    def defaults(cls) -> 'SivParams':
        return cls(DEFAULT_REGIMES)

    @classmethod
    def single(cls, regime: RegimeParams) -> 'SivParams':
        return cls((regime,))

    @property
    def n_regimes(self) -> int:
        return len(self.regimes)

    @property
    def max_diffusivity(self) -> float:
        return max(r.max_diffusivity for r in self.regimes)

    def with_regime(self, index: int, **changes) -> 'SivParams':
        """Copy with some coefficients of one regime replaced"""
        regimes = list(self.regimes)
        regimes[index] = regimes[index].replace(**changes)
        return SivParams(tuple(regimes), self.cell_profiles)

    def with_all(self, **changes) -> 'SivParams':
        """Copy with the same coefficients replaced in every regime"""
        return SivParams(tuple(r.replace(**changes) for r in self.regimes), self.cell_profiles)

    def at(self, regimes: Regimes) -> Coefficients:
        """
        Coefficients of the regime in force on every path

        Args:
            regimes: Regime index, or array of per-path indices

        Returns:
            Coefficients with scalars (int input) or (paths, 1) columns
        """
        idx = np.asarray(regimes, dtype=np.int64)
        if np.any(idx < 0) or np.any(idx >= self.n_regimes):
            raise ValidationError.single('regime', f"index outside 0..{self.n_regimes - 1}")
        rows = self._table[idx]
        if idx.ndim == 0:
            values: List[Any] = [float(x) for x in rows]
        else:
            values = [rows[..., k, None] for k in range(len(PARAM_NAMES))]
        coeffs = Coefficients(*values)
        if self.cell_profiles:
            coeffs = coeffs._replace(**{name: getattr(coeffs, name) * profile
                                        for name, profile in self.cell_profiles.items()})
        return coeffs

    def check_profiles(self, n_cells: int) -> None:
        """Every per-cell profile must have one entry per cell"""
        violations = [(f"model.cell_profiles.{name}", f"needs {n_cells} entries, got {profile.size}")
                      for name, profile in self.cell_profiles.items() if profile.size != n_cells]
        if violations:
            raise ValidationError(violations)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {str(k + 1): r.to_dict() for k, r in enumerate(self.regimes)}
        if self.cell_profiles:
            data['cell_profiles'] = {name: profile.tolist() for name, profile in self.cell_profiles.items()}
        return data


@dataclass(frozen=True)
class CostParams:
    """Weights of the running cost A1 S + A2 I + w (tau1 u1^2 + tau2 u2^2) and the terminal cost"""
    a1: float = 1.0
    a2: float = 1.0
    tau1: float = 0.5
    tau2: float = 0.5
    terminal_weight: float = 1.0
    control_weighting: float = 0.5

    def __post_init__(self):
        violations = []
        for name in ('a1', 'a2', 'terminal_weight', 'control_weighting'):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                violations.append((f"cost.{name}", f"must be nonnegative, got {value}"))
        for name in ('tau1', 'tau2'):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                violations.append((f"cost.{name}", f"must be positive, got {value}"))
        if violations:
            raise ValidationError(violations)

    def replace(self, **changes) -> 'CostParams':
        data = asdict(self)
        data.update(changes)
        return CostParams(**data)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)
