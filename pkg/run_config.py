from dataclasses import dataclass, field, asdict, fields
from typing import Dict, Any, Optional
import yaml

from errors import ConfigError

# --- Configuration ---
TOOL_VERSION = "v1.0.0"
DEFAULT_CONFIG_PATH = "workbench.yaml"
OUTPUT_FORMATS = ('json', 'md')


@dataclass
class Tolerances:
    exact: float = 1e-8     # paths that start from exact rationals
    numeric: float = 1e-6   # purely floating-point paths
    zero: float = 1e-12     # below this a singular value counts as zero


@dataclass
class Truncation:
    fock_level: int = 6
    graded_window: int = 64
    fourier_modes: int = 8
    basis_cap: int = 200_000
    paths_per_level: int = 64


@dataclass
class Asymptotics:
    n_max: int = 200
    k_max: int = 2


@dataclass
class RunConfig:
    tolerances: Tolerances = field(default_factory=Tolerances)
    truncation: Truncation = field(default_factory=Truncation)
    asymptotics: Asymptotics = field(default_factory=Asymptotics)
    output_format: str = 'json'
    seed: int = 20240601

    def validate(self) -> 'RunConfig':
        """Raises ConfigError unless every limit is positive and the format is known."""
        for section in (self.tolerances, self.truncation, self.asymptotics):
            for f in fields(section):
                value = getattr(section, f.name)
                if not value > 0:
                    raise ConfigError(f"{type(section).__name__.lower()}.{f.name} must be positive, got {value!r}")
        if self.truncation.fock_level < 2:
            raise ConfigError("truncation.fock_level must be at least 2")
        if self.truncation.graded_window < 4:
            raise ConfigError("truncation.graded_window must be at least 4")
        if self.output_format not in OUTPUT_FORMATS:
            raise ConfigError(f"output_format must be one of {OUTPUT_FORMATS}, got {self.output_format!r}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunConfig':
        data = dict(data or {})
        sections = {'tolerances': Tolerances, 'truncation': Truncation, 'asymptotics': Asymptotics}
        kwargs: Dict[str, Any] = {}
        for key, value in data.items():
            if key in sections:
                section_cls = sections[key]
                allowed = {f.name for f in fields(section_cls)}
                unknown = set(value or {}) - allowed
                if unknown:
                    raise ConfigError(f"Unknown keys in '{key}': {sorted(unknown)}")
                kwargs[key] = section_cls(**(value or {}))
            elif key in ('output_format', 'seed'):
                kwargs[key] = value
            else:
                raise ConfigError(f"Unknown configuration key: {key!r}")
        return cls(**kwargs).validate()


def load_config(path: Optional[str] = None) -> RunConfig:
    """Reads a YAML config file; a missing default file just yields the defaults."""
    target = path or DEFAULT_CONFIG_PATH
    try:
        with open(target, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError:
        if path is not None:
            raise ConfigError(f"Config file not found: {path}")
        return RunConfig().validate()
    except yaml.YAMLError as e:
        raise ConfigError(f"Could not parse {target}: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"{target} must contain a mapping at top level")
    return RunConfig.from_dict(data)


def apply_overrides(config: RunConfig, overrides: Dict[str, Any]) -> RunConfig:
    """Applies flat CLI overrides such as {'fock_level': 8, 'float_tol': 1e-7}; None values are skipped."""
    mapping = {
        'exact_tol': ('tolerances', 'exact'),
        'float_tol': ('tolerances', 'numeric'),
        'fock_level': ('truncation', 'fock_level'),
        'graded_window': ('truncation', 'graded_window'),
        'fourier_modes': ('truncation', 'fourier_modes'),
        'basis_cap': ('truncation', 'basis_cap'),
        'n_max': ('asymptotics', 'n_max'),
        'k_max': ('asymptotics', 'k_max'),
    }
    data = config.to_dict()
    for key, value in overrides.items():
        if value is None:
            continue
        if key in mapping:
            section, name = mapping[key]
            data[section][name] = value
        elif key in ('output_format', 'seed'):
            data[key] = value
        else:
            raise ConfigError(f"Unknown override: {key}")
    return RunConfig.from_dict(data)
