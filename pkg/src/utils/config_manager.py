"""Configuration management module"""

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from loguru import logger

from ..core.errors import ConfigError, ValidationError
from ..core.grid import SpatialGrid
from ..core.integrator import StepConfig
from ..core.model import CostParams, FieldState, RegimeParams, SivParams
from ..core.regime import RegimeChain
from ..services.control import SweepConfig
from ..services.irl import IrlConfig
from ..services.measure import MeasureConfig


DEFAULT_PATH = Path(__file__).parent.parent.parent / 'config' / 'default_settings.yaml'

SECTIONS = ('model', 'regime', 'grid', 'initial', 'stepping', 'ensemble', 'cost', 'sweep', 'irl',
            'measure', 'output', 'logging')

# CLI flag -> dotted key
FLAG_KEYS = {
    'seed': 'stepping.seed',
    'paths': 'ensemble.paths',
    'threads': 'ensemble.threads',
    'out': 'output.directory',
    'dt': 'stepping.dt',
    't_final': 'stepping.t_final',
    'grid_n': 'grid.n_cells',
    'shared_zeta': 'stepping.shared_zeta',
}


class ConfigManager:
    """Layered configuration: packaged defaults, then a user file, then overrides"""

    def __init__(self, config_path: Optional[Union[str, Path]] = None,
                 overrides: Optional[Mapping[str, Any]] = None):
        """
        Initialize configuration manager

        Args:
            config_path: Optional user YAML or JSON file
            overrides: Dotted-key values applied last
        """
        self.config_path = None if config_path is None else Path(config_path)
        self.overrides = dict(overrides or {})
        self.config: Dict[str, Any] = {}
        self._load_defaults()
        self._load_config()
        self._apply_overrides()

    def _load_defaults(self):
        """Load default configuration"""
        if DEFAULT_PATH.exists():
            with open(DEFAULT_PATH, 'r', encoding='utf-8') as f:
                self.config = yaml.safe_load(f) or {}
            logger.debug("Loaded default configuration")
        else:
            logger.warning(f"Default config not found: {DEFAULT_PATH}")
            self._create_default_config()

    def _create_default_config(self):
        """Create default configuration in memory"""
        self.config = {
            'model': {'regimes': [r.to_dict() for r in SivParams.defaults().regimes], 'cell_profiles': {}},
            'regime': {'generator': [[-5.5, 5.5], [8.0, -8.0]], 'initial': 0, 'rho': [-1.0, -1.0],
                       'p_grid_points': 20},
            'grid': {'n_cells': 32, 'length': 1.0},
            'initial': {'s': 0.6, 'i': 0.1, 'v': 1.0},
            'stepping': {'dt': 0.01, 't_final': 10.0, 'seed': 0, 'scheme': 'milstein', 'adjoint': 'consistent',
                         'shared_zeta': False, 'clamp_negative': True},
            'ensemble': {'paths': 200, 'threads': 1, 'batch_size': 256, 'control': [0.0, 0.0]},
            'cost': CostParams().to_dict(),
            'sweep': {k: v for k, v in SweepConfig().to_dict().items() if k not in ('n_paths', 'threads')},
            'irl': {'delta': 0.1, 'i_max': 5, 't_final': 5.0, 'grid_n': 1},
            'measure': {'checkpoints': [25.0, 28.0, 30.0], 'cross_times': [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
                        'p': 1.0, 'paths': 10000},
            'output': {'directory': 'output', 'max_trajectory_files': 5, 'binary': True},
            'logging': {'level': 'INFO', 'file_logging': False, 'directory': 'logs',
                        'rotation': '10 MB', 'retention': 5},
        }

    def _load_config(self):
        """Load user configuration"""
        if self.config_path is None:
            return
        if not self.config_path.exists():
            raise ConfigError([('config', f"file not found: {self.config_path}")])
        user_config = _expand_dotted(parse_config_text(self.config_path.read_text(encoding='utf-8'),
                                                       str(self.config_path)))
        self._merge_config(self.config, user_config)
        logger.info(f"Loaded user configuration from {self.config_path}")

    def _apply_overrides(self):
        for key, value in self.overrides.items():
            if value is not None:
                self.set(key, value)

    def _merge_config(self, base: Dict, updates: Dict):
        """
        Recursively merge configuration dictionaries

        Args:
            base: Base configuration
            updates: Updates to apply
        """
        for key, value in updates.items():
            if key in base and isinstance(base[key], dict) and isinstance(value, dict):
                self._merge_config(base[key], value)
            else:
                base[key] = value

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get configuration value

        Args:
            key: Configuration key (dot notation supported)
            default: Default value if not found

        Returns:
            Configuration value
        """
        value = self.config
        for k in key.split('.'):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any):
        """
        Set configuration value

        Args:
            key: Configuration key (dot notation supported)
            value: Value to set
        """
        keys = key.split('.')
        config = self.config
        for k in keys[:-1]:
            if not isinstance(config.get(k), dict):
                config[k] = {}
            config = config[k]
        config[keys[-1]] = value
        logger.debug(f"Set config: {key} = {value}")

    def get_all(self) -> Dict[str, Any]:
        """Get entire configuration"""
        return copy.deepcopy(self.config)

    def reload(self):
        """Reload configuration from file"""
        self._load_defaults()
        self._load_config()
        self._apply_overrides()
        logger.info("Configuration reloaded from file")

    def reset(self):
        """Reset to default configuration"""
        self._load_defaults()
        logger.info("Configuration reset to defaults")

    def config_hash(self) -> str:
        """First 16 hex digits of SHA-256 over the canonical JSON of the merged tree"""
        canonical = json.dumps(self.config, sort_keys=True, separators=(',', ':'), default=str)
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]

    def validate(self) -> List[Tuple[str, str]]:
        """
        Validate configuration

        Returns:
            Every violation found across sections (empty when valid)
        """
        _, violations = _build(self.config)
        return violations

    def run_config(self) -> 'RunConfig':
        """Typed, validated configuration"""
        run, violations = _build(self.config)
        if violations:
            raise ConfigError(violations)
        run.config_hash = self.config_hash()
        run.raw = self.get_all()
        return run


@dataclass
class RunConfig:
    """Validated settings of one run"""
    params: SivParams
    chain: RegimeChain
    grid: SpatialGrid
    stepping: StepConfig
    cost: CostParams
    sweep: SweepConfig
    irl: IrlConfig
    measure: MeasureConfig
    initial_values: Tuple[float, float, float]
    initial_regime: int = 0
    rho: Tuple[float, ...] = ()
    p_grid_points: int = 20
    n_paths: int = 200
    threads: int = 1
    batch_size: int = 256
    constant_control: Tuple[float, float] = (0.0, 0.0)
    irl_t_final: float = 5.0
    irl_grid_n: int = 1
    output_dir: Path = Path('output')
    max_trajectory_files: int = 5
    write_binary: bool = True
    logging: Dict[str, Any] = field(default_factory=dict)
    config_hash: str = ''
    raw: Dict[str, Any] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.stepping.rng_seed

    def initial_state(self, grid: Optional[SpatialGrid] = None) -> FieldState:
        return FieldState.uniform(grid or self.grid, *self.initial_values)


def parse_config_text(text: str, source: str = '<config>') -> Dict[str, Any]:
    """Parse YAML (JSON included); errors carry line and column"""
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark
        line = None if mark is None else mark.line + 1
        column = None if mark is None else mark.column + 1
        raise ConfigError([('config', f"{source}: {e.problem or 'parse error'}")], line, column) from None
    except yaml.YAMLError as e:
        raise ConfigError([('config', f"{source}: {e}")]) from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError([('config', f"{source}: top level must be a mapping")])
    return data


def _section(config: Mapping[str, Any], name: str) -> Dict[str, Any]:
    value = config.get(name) or {}
    if not isinstance(value, dict):
        raise ValidationError.single(name, "must be a mapping")
    return value


def _number(value: Any, key: str) -> float:
    if isinstance(value, bool):
        raise ValidationError.single(key, f"must be a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ValidationError.single(key, f"must be a number, got {value!r}") from None


def _numbers(value: Any, key: str, length: Optional[int] = None) -> Tuple[float, ...]:
    if not isinstance(value, (list, tuple)):
        raise ValidationError.single(key, f"must be a list of numbers, got {value!r}")
    numbers = tuple(_number(v, f"{key}[{k}]") for k, v in enumerate(value))
    if length is not None and len(numbers) != length:
        raise ValidationError.single(key, f"needs {length} values, got {len(numbers)}")
    return numbers


def _integer(value: Any, key: str, minimum: int = 0) -> int:
    if (isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value)
            or int(value) != value or value < minimum):
        raise ValidationError.single(key, f"must be an integer >= {minimum}, got {value!r}")
    return int(value)


def _read_all(readers: Sequence[Tuple[str, Callable[[], Any]]]) -> Dict[str, Any]:
    """Run every reader; violations of all of them are raised together"""
    errors = []
    values: Dict[str, Any] = {}
    for name, reader in readers:
        try:
            values[name] = reader()
        except ValidationError as e:
            errors.extend(e.violations)
    if errors:
        raise ValidationError(errors)
    return values


def _regime_label(key: Any) -> Optional[int]:
    """Regime label of a `regime` section key, None for the chain settings"""
    if isinstance(key, int) and not isinstance(key, bool):
        return key
    if isinstance(key, str) and key.isdigit():
        return int(key)
    return None


def _regime_entries(config: Mapping[str, Any]) -> List[Dict[str, Any]]:
    """
    Per-regime parameter mappings

    `model.regimes` gives the base list; `regime.<i>` entries (i = 1..N) override
    single fields of regime i or, for i = N + 1, append a complete regime.
    """
    regimes = _section(config, 'model').get('regimes') or []
    if not isinstance(regimes, list):
        raise ValidationError.single('model.regimes', "must be a list")
    entries = []
    for k, entry in enumerate(regimes):
        if not isinstance(entry, dict):
            raise ValidationError.single(f"model.regimes[{k}]", "must be a mapping")
        entries.append(dict(entry))

    labelled: Dict[int, Dict[str, Any]] = {}
    for key, entry in _section(config, 'regime').items():
        label = _regime_label(key)
        if label is None:
            continue
        if not isinstance(entry, dict):
            raise ValidationError.single(f"regime.{key}", "must be a mapping of parameters")
        labelled[label] = entry
    for label in sorted(labelled):
        if 1 <= label <= len(entries):
            entries[label - 1].update(labelled[label])
        elif label == len(entries) + 1:
            entries.append(dict(labelled[label]))
        else:
            raise ValidationError.single(f"regime.{label}",
                                         f"labels run 1..N consecutively; next is {len(entries) + 1}")
    return entries


def _string_keys(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _string_keys(v) for k, v in value.items()}
    return value


def _expand_dotted(data: Mapping[str, Any]) -> Dict[str, Any]:
    """Nest top-level dotted keys such as `regime.1.beta`; all keys become strings"""
    nested: Dict[str, Any] = {}
    for key, value in _string_keys(dict(data)).items():
        parts = key.split('.')
        target = nested
        for part in parts[:-1]:
            if not isinstance(target.get(part), dict):
                target[part] = {}
            target = target[part]
        last = parts[-1]
        if isinstance(value, dict) and isinstance(target.get(last), dict):
            target[last].update(value)
        else:
            target[last] = value
    return nested


def _build(config: Mapping[str, Any]) -> Tuple[Optional[RunConfig], List[Tuple[str, str]]]:
    """Construct every section, collecting all violations"""
    violations: List[Tuple[str, str]] = []
    built: Dict[str, Any] = {}

    def attempt(name: str, factory: Callable[[], Any]):
        try:
            built[name] = factory()
        except ValidationError as e:
            violations.extend(e.violations)
        except (TypeError, ValueError, AttributeError) as e:
            violations.append((name, str(e)))

    unknown = sorted(set(config) - set(SECTIONS))
    violations.extend((k, "unknown section") for k in unknown)

    def params():
        errors, parsed = [], []
        for k, entry in enumerate(_regime_entries(config)):
            try:
                parsed.append(RegimeParams.from_dict(entry, f"regime.{k + 1}."))
            except ValidationError as e:
                errors.extend(e.violations)
        if errors:
            raise ValidationError(errors)
        profiles = _section(config, 'model').get('cell_profiles') or {}
        if not isinstance(profiles, dict):
            raise ValidationError.single('model.cell_profiles', "must map coefficient names to lists")
        return SivParams(tuple(parsed), profiles)

    attempt('params', params)
    attempt('chain', lambda: RegimeChain.from_rows(_section(config, 'regime').get('generator')))
    attempt('grid', lambda: SpatialGrid(**_section(config, 'grid')))

    def stepping():
        s = _section(config, 'stepping')
        return StepConfig(
            dt=_number(s.get('dt', 0.01), 'stepping.dt'), t_final=_number(s.get('t_final', 10.0), 'stepping.t_final'),
            clamp_negative=bool(s.get('clamp_negative', True)), rng_seed=_integer(s.get('seed', 0), 'stepping.seed'),
            scheme=s.get('scheme', 'milstein'), shared_zeta=bool(s.get('shared_zeta', False)),
            adjoint=s.get('adjoint', 'consistent'),
        )

    attempt('stepping', stepping)
    attempt('cost', lambda: CostParams(**{k: _number(v, f"cost.{k}") for k, v in _section(config, 'cost').items()}))

    def ensemble():
        e = _section(config, 'ensemble')
        values = _read_all((
            ('paths', lambda: _integer(e.get('paths', 200), 'ensemble.paths', 1)),
            ('threads', lambda: _integer(e.get('threads', 1), 'ensemble.threads', 1)),
            ('batch_size', lambda: _integer(e.get('batch_size', 256), 'ensemble.batch_size', 1)),
            ('control', lambda: _numbers(e.get('control', (0.0, 0.0)), 'ensemble.control', 2)),
        ))
        if any(not 0 <= u <= 1 for u in values['control']):
            raise ValidationError.single('ensemble.control',
                                         f"need two values in [0, 1], got {list(values['control'])}")
        return values

    attempt('ensemble', ensemble)
    n_paths = built.get('ensemble', {}).get('paths', 200)
    threads = built.get('ensemble', {}).get('threads', 1)

    def sweep():
        s = dict(_section(config, 'sweep'))
        for key in ('u1_bounds', 'u2_bounds'):
            s[key] = _numbers(s.get(key, (0.0, 1.0)), f"sweep.{key}", 2)
        return SweepConfig(n_paths=n_paths, threads=threads, **s)

    attempt('sweep', sweep)

    def irl():
        data = dict(_section(config, 'irl'))
        t_final = _number(data.pop('t_final', 5.0), 'irl.t_final')
        grid_n = _integer(data.pop('grid_n', 1), 'irl.grid_n', 1)
        renames = {'paths': 'n_paths', 'probe_states': 'n_probe'}
        data = {renames.get(k, k): v for k, v in data.items()}
        for key in ('behavior_level', 'initial_policy', 'u1_bounds', 'u2_bounds'):
            if key in data:
                data[key] = _numbers(data[key], f"irl.{key}", 2)
        if 'initial_box' in data:
            box = data['initial_box']
            if not isinstance(box, (list, tuple)):
                raise ValidationError.single('irl.initial_box', "must be three [low, high] pairs")
            data['initial_box'] = tuple(_numbers(pair, f"irl.initial_box[{k}]", 2) for k, pair in enumerate(box))
        return IrlConfig(**data), t_final, grid_n

    attempt('irl', irl)

    def measure():
        m = dict(_section(config, 'measure'))
        if 'paths' in m:
            m['n_paths'] = m.pop('paths')
        for key in ('checkpoints', 'cross_times'):
            if key in m:
                m[key] = _numbers(m[key], f"measure.{key}")
        if 'alt_initial' in m:
            m['alt_initial'] = _numbers(m['alt_initial'], 'measure.alt_initial', 3)
        return MeasureConfig(**m)

    attempt('measure', measure)

    def initial():
        section = _section(config, 'initial')
        values = tuple(_number(section.get(k, d), f"initial.{k}") for k, d in (('s', 0.6), ('i', 0.1), ('v', 1.0)))
        if any(not np.isfinite(x) or x < 0 for x in values):
            raise ValidationError.single('initial', f"initial proportions must be finite and nonnegative, got {values}")
        return values

    attempt('initial', initial)

    def regime():
        section = _section(config, 'regime')
        rho = section.get('rho') or ()
        values = _read_all((
            ('initial', lambda: _integer(section.get('initial', 0), 'regime.initial')),
            ('rho', lambda: _numbers(rho, 'regime.rho') if rho else ()),
            ('p_grid_points', lambda: _integer(section.get('p_grid_points', 20), 'regime.p_grid_points', 1)),
        ))
        return values['initial'], values['rho'], values['p_grid_points']

    attempt('regime', regime)

    def output():
        section = _section(config, 'output')
        return (Path(str(section.get('directory', 'output'))),
                _integer(section.get('max_trajectory_files', 5), 'output.max_trajectory_files'),
                bool(section.get('binary', True)))

    attempt('output', output)
    attempt('logging', lambda: dict(_section(config, 'logging')))

    if 'chain' in built and 'regime' in built:
        n_states = built['chain'].n_states
        initial_regime, rho, _ = built['regime']
        if initial_regime >= n_states:
            violations.append(('regime.initial', f"must be a regime index in 0..{n_states - 1}"))
        if rho and len(rho) != n_states:
            violations.append(('regime.rho', f"needs {n_states} entries, got {len(rho)}"))
    if 'chain' in built and 'params' in built and built['params'].n_regimes != built['chain'].n_states:
        violations.append(('model.regimes',
                           f"{built['params'].n_regimes} parameter sets for {built['chain'].n_states} regimes"))

    checks = []
    if {'grid', 'params'} <= set(built):
        checks.append(lambda: built['params'].check_profiles(built['grid'].n_cells))
    if {'stepping', 'grid', 'params'} <= set(built):
        checks.append(lambda: built['stepping'].check_stability(built['grid'], built['params'].max_diffusivity))
    for check in checks:
        try:
            check()
        except ValidationError as e:
            violations.extend(e.violations)

    if violations:
        for key, message in violations:
            logger.debug(f"Config violation {key}: {message}")
        return None, violations

    irl_cfg, irl_t_final, irl_grid_n = built['irl']
    initial_regime, rho, p_grid_points = built['regime']
    output_dir, max_files, write_binary = built['output']
    run = RunConfig(
        params=built['params'], chain=built['chain'], grid=built['grid'], stepping=built['stepping'],
        cost=built['cost'], sweep=built['sweep'], irl=irl_cfg, measure=built['measure'],
        initial_values=built['initial'], initial_regime=initial_regime, rho=rho,
        p_grid_points=p_grid_points, n_paths=n_paths, threads=threads,
        batch_size=built['ensemble']['batch_size'], constant_control=built['ensemble']['control'],
        irl_t_final=irl_t_final, irl_grid_n=irl_grid_n,
        output_dir=output_dir, max_trajectory_files=max_files, write_binary=write_binary,
        logging=built['logging'],
    )
    return run, []


def load_config(path: Optional[Union[str, Path]] = None,
                overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Load defaults, a user file and overrides into a validated RunConfig

    Args:
        path: Optional YAML/JSON file; omitted fields keep their defaults
        overrides: Dotted-key values (e.g. from CLI flags)

    Returns:
        RunConfig with config_hash set

    Raises:
        ConfigError: Parse error (with line/column) or aggregated validation failure
    """
    manager = ConfigManager(path, overrides)
    run = manager.run_config()
    logger.info(f"Configuration loaded (hash {run.config_hash})")
    return run
