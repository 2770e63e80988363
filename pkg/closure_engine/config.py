"""
Configuration file for the MesoClosure Engine
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from .errors import ConfigError, InvalidArgumentError
from .window_functions import WindowKind

logger = logging.getLogger(__name__)


class ClosureConfig:
    """Process-level configuration for the closure engine"""

    def __init__(self):
        # Execution
        self.workers = int(os.getenv('CLOSURE_WORKERS', 1))
        self.output_dir = os.getenv('CLOSURE_OUTPUT_DIR', 'results')

        # Regularization
        self.sigma_cut = float(os.getenv('SIGMA_CUT', 1e-13))
        self.rhs_tol = float(os.getenv('RHS_TOL', 1e-13))
        self.density_floor_factor = float(os.getenv('DENSITY_FLOOR_FACTOR', 1e-10))  # times M/L
        self.jacobian_floor = float(os.getenv('JACOBIAN_FLOOR', 1e-6))
        self.max_clamped_fraction = float(os.getenv('MAX_CLAMPED_FRACTION', 0.1))

        # Dynamics
        self.energy_tolerance = float(os.getenv('ENERGY_TOLERANCE', 5e-4))
        self.default_dt = float(os.getenv('DEFAULT_DT', 1e-4))
        self.dt_max_halvings = int(os.getenv('DT_MAX_HALVINGS', 4))
        self.lj_epsilon = float(os.getenv('LJ_EPSILON', 0.025))
        self.lj_cutoff_factor = float(os.getenv('LJ_CUTOFF_FACTOR', 2.5))

        # Logging
        self.log_level = os.getenv('LOG_LEVEL', 'INFO')
        self.log_format = os.getenv('LOG_FORMAT',
                                    '%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    def get_regularization_defaults(self) -> Dict[str, Any]:
        """Get regularization thresholds"""
        return {
            'sigma_cut': self.sigma_cut,
            'rhs_tol': self.rhs_tol,
            'density_floor_factor': self.density_floor_factor,
            'jacobian_floor': self.jacobian_floor,
            'max_clamped_fraction': self.max_clamped_fraction
        }

    def get_dynamics_defaults(self) -> Dict[str, Any]:
        """Get molecular dynamics defaults"""
        return {
            'energy_tolerance': self.energy_tolerance,
            'dt': self.default_dt,
            'dt_max_halvings': self.dt_max_halvings,
            'epsilon_well': self.lj_epsilon,
            'cutoff_factor': self.lj_cutoff_factor
        }

    def to_dict(self) -> Dict[str, Any]:
        """Convert configuration to dictionary"""
        return {
            'regularization': self.get_regularization_defaults(),
            'dynamics': self.get_dynamics_defaults(),
            'workers': self.workers,
            'output_dir': self.output_dir,
            'log_level': self.log_level,
            'log_format': self.log_format
        }


# Global configuration instance
config = ClosureConfig()


FILTER_VARIANTS = ('tsvd', 'tikhonov', 'landweber')
TEST_CASES = ('sine', 'quartic')


def default_dt() -> float:
    """Verlet step before calibration; halved when the energy check fails"""
    return config.default_dt


def default_sample_times(t_end: float, fine: bool = False) -> List[float]:
    """0, 0.1, ... up to t_end, or a 0.01 grid when fine tracing"""
    step = 0.01 if fine else 0.1
    count = int(np.floor(t_end / step + 1e-9))
    times = [round(k * step, 10) for k in range(count + 1)]
    if t_end - times[-1] > 1e-9:
        times.append(float(t_end))
    return times


def _as_list(value) -> List:
    return list(value) if isinstance(value, (list, tuple)) else [value]


@dataclass
class ExperimentConfig:
    """
    One experiment, or a sweep when N, eta or window are lists.

    Loaded from JSON; every key is optional and unknown keys are rejected.
    """

    test_case: str = 'sine'
    N: Union[int, List[int]] = 1000
    B: int = 500
    Nfine: Optional[int] = None
    eta: Union[float, List[float]] = 0.1
    window: Union[str, List[str]] = 'gaussian'
    dt: Optional[float] = None
    t_end: float = 1.0
    sample_times: Optional[List[float]] = None
    fine_tracing: bool = False
    filter: Dict[str, Any] = field(default_factory=lambda: {'variant': 'tsvd'})
    rhs_tol: Optional[float] = None
    L: float = 1.0
    M: float = 1.0
    epsilon_well: Optional[float] = None
    cutoff_factor: Optional[float] = None
    output_dir: Optional[str] = None
    workers: Optional[int] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentConfig':
        if not isinstance(data, dict):
            raise ConfigError("Experiment configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}")
        experiment = cls(**data)
        experiment.validate()
        return experiment

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> 'ExperimentConfig':
        try:
            with open(path, 'r', encoding='utf-8') as handle:
                data = json.load(handle)
        except FileNotFoundError:
            raise ConfigError(f"Configuration file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"Malformed configuration file {path}: {str(e)}")
        logger.info(f"Loaded experiment configuration from {path}")
        return cls.from_dict(data)

    def with_overrides(self, **overrides) -> 'ExperimentConfig':
        updated = replace(self, **overrides)
        updated.validate()
        return updated

    def validate(self) -> None:
        """Raise ConfigError on the first invalid value"""
        if self.test_case not in TEST_CASES:
            raise ConfigError(f"test_case must be one of {TEST_CASES}, got {self.test_case!r}")
        for n in _as_list(self.N):
            if not isinstance(n, int) or n < 8:
                raise ConfigError(f"N must be an integer >= 8, got {n!r}")
        if not isinstance(self.B, int) or self.B < 3:
            raise ConfigError(f"B must be an integer >= 3, got {self.B!r}")
        for n in _as_list(self.N):
            nfine = self.Nfine if self.Nfine is not None else n
            if not isinstance(nfine, int) or nfine < self.B:
                raise ConfigError(f"Nfine ({nfine}) must be an integer >= B ({self.B})")
        for eta in _as_list(self.eta):
            if not isinstance(eta, (int, float)) or not (0.0 < eta < 1.0):
                raise ConfigError(f"eta must lie in (0, 1), got {eta!r}")
        for window in _as_list(self.window):
            try:
                WindowKind.from_name(window)
            except InvalidArgumentError as e:
                raise ConfigError(str(e))
        if self.dt is not None and not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if self.sample_times is not None:
            times = list(self.sample_times)
            if any(t < 0 or t > self.t_end + 1e-12 for t in times):
                raise ConfigError(f"sample_times must lie in [0, t_end={self.t_end}]")
            if any(b <= a for a, b in zip(times[:-1], times[1:])):
                raise ConfigError("sample_times must be strictly increasing")
        if not self.L > 0 or not self.M > 0:
            raise ConfigError(f"L and M must be positive, got L={self.L}, M={self.M}")
        if self.epsilon_well is not None and self.epsilon_well < 0:
            raise ConfigError(f"epsilon_well must be non-negative, got {self.epsilon_well}")
        if self.cutoff_factor is not None and self.cutoff_factor < 1:
            raise ConfigError(f"cutoff_factor must be >= 1, got {self.cutoff_factor}")
        if self.workers is not None and (not isinstance(self.workers, int) or self.workers < 1):
            raise ConfigError(f"workers must be a positive integer, got {self.workers!r}")
        self._validate_filter()

    def _validate_filter(self) -> None:
        spec = self.filter or {}
        unknown = sorted(set(spec) - {'variant', 'sigma_cut', 'alpha', 'n'})
        if unknown:
            raise ConfigError(f"Unknown filter keys: {', '.join(unknown)}")
        variant = spec.get('variant', 'tsvd')
        if variant not in FILTER_VARIANTS:
            raise ConfigError(f"filter.variant must be one of {FILTER_VARIANTS}, got {variant!r}")
        if variant == 'tikhonov' and spec.get('alpha') is None:
            raise ConfigError("Tikhonov filtering requires filter.alpha")
        if variant == 'landweber' and spec.get('n') is None:
            raise ConfigError("Landweber filtering requires filter.n")
        if spec.get('alpha') is not None and spec['alpha'] < 0:
            raise ConfigError(f"filter.alpha must be non-negative, got {spec['alpha']}")
        if spec.get('n') is not None and (not isinstance(spec['n'], int) or spec['n'] < 0):
            raise ConfigError(f"filter.n must be a non-negative integer, got {spec['n']!r}")

    @property
    def is_sweep(self) -> bool:
        return any(isinstance(v, (list, tuple)) for v in (self.N, self.eta, self.window))

    def expand(self) -> List['ExperimentConfig']:
        """Single-run configurations in window-major, eta, N order"""
        runs = []
        for window in _as_list(self.window):
            for eta in _as_list(self.eta):
                for n in _as_list(self.N):
                    runs.append(replace(self, window=window, eta=eta, N=n))
        return runs

    def resolved(self) -> Dict[str, Any]:
        """Every key with defaults filled in, as echoed into the manifest"""
        data = asdict(self)
        reg = config.get_regularization_defaults()
        dyn = config.get_dynamics_defaults()
        data['Nfine'] = self.Nfine if self.Nfine is not None else self.N
        data['dt'] = self.dt if self.dt is not None else default_dt()
        data['sample_times'] = self.times()
        data['filter'] = {'variant': 'tsvd', 'sigma_cut': reg['sigma_cut'], 'alpha': None, 'n': None,
                          **(self.filter or {})}
        data['rhs_tol'] = self.rhs_tol if self.rhs_tol is not None else reg['rhs_tol']
        data['epsilon_well'] = self.epsilon_well if self.epsilon_well is not None else dyn['epsilon_well']
        data['cutoff_factor'] = self.cutoff_factor if self.cutoff_factor is not None else dyn['cutoff_factor']
        data['output_dir'] = self.output_dir or config.output_dir
        data['workers'] = self.workers or config.workers
        return data

    # Accessors for a single-run configuration

    def times(self) -> List[float]:
        if self.sample_times is not None:
            return [float(t) for t in self.sample_times]
        return default_sample_times(self.t_end, self.fine_tracing)

    def fine_count(self) -> int:
        return self.Nfine if self.Nfine is not None else int(self.N)

    def time_step(self) -> float:
        return self.dt if self.dt is not None else default_dt()

    def tolerance(self) -> float:
        return self.rhs_tol if self.rhs_tol is not None else config.rhs_tol

    def well_depth(self) -> float:
        return self.epsilon_well if self.epsilon_well is not None else config.lj_epsilon

    def cutoff(self) -> float:
        return self.cutoff_factor if self.cutoff_factor is not None else config.lj_cutoff_factor

    def worker_count(self) -> int:
        return self.workers or config.workers

    def output_path(self) -> Path:
        return Path(self.output_dir or config.output_dir)
