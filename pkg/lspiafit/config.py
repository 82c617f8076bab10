"""Run configuration: YAML files, command-line overrides and validation."""

import logging
import os
from typing import Optional, Tuple

import yaml

from .errors import ConfigError
from .fitting import CHORD, FREEZE, GIVEN, PARAM_MODES
from .lspia import AUTO, SUBSET, WEIGHTED, ZERO, SolverConfig
from .oracle import DEFAULT_DENSE_LIMIT, DEFAULT_TOL
from .splinecore import BasisSpace, KnotVector
from .synthetic import SyntheticSpec

logger = logging.getLogger(__name__)

COMMANDS = ('fit', 'diagnose', 'synth')
CLAMPED_UNIFORM = 'clamped-uniform'
VALID_LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']
DEFAULT_OUT_PREFIX = 'lspiafit-out'

KNOWN_KEYS = {
    'basis_dim', 'degree', 'controls', 'knots', 'param', 'variant', 'alpha', 'max_iters',
    'tol_delta', 'tol_residual_change', 'stall_window', 'empty_group', 'start', 'input',
    'input_format', 'out_prefix', 'seed', 'log_level', 'dense_limit', 'zero_tol', 'tol',
    'workers', 'synth', 'trace_timing', 'with_pinv', 'non_interactive',
}
SYNTH_KEYS = {'kind', 'samples', 'hole', 'cluster_multiplicity', 'noise', 'field', 'seed', 'scatter'}


def _int_tuple(value, name: str) -> Tuple[int, ...]:
    if isinstance(value, (int, str)) and not isinstance(value, bool):
        value = [value] if isinstance(value, int) else [v for v in value.split(',') if v.strip()]
    try:
        out = tuple(int(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be an integer or a list of integers, got {value!r}")
    if not out:
        raise ConfigError(f"{name} must not be empty")
    return out


def _positive_number(value, name: str) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if not value > 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


def _positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return value


def _broadcast(values: Tuple[int, ...], dim: int, name: str) -> Tuple[int, ...]:
    if len(values) == 1:
        return values * dim
    if len(values) != dim:
        raise ConfigError(f"{name} has {len(values)} entries but basis_dim is {dim}")
    return values


class RunConfig:
    """Configuration of one fit, diagnose or synth run."""

    def __init__(self, config_dict: dict, command: str = 'fit'):
        """
        Initialize configuration from a dictionary.

        Args:
            config_dict: Values keyed like the long command-line flags (dashes as underscores)
            command: 'fit', 'diagnose' or 'synth'

        Raises:
            ConfigError: If a value is invalid or values contradict each other
        """
        if command not in COMMANDS:
            raise ConfigError(f"unknown command '{command}'")
        self.command = command

        unknown = set(config_dict) - KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {', '.join(sorted(unknown))}")

        self.seed = config_dict.get('seed', 0)
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed!r}")

        # Data source
        self.input = config_dict.get('input')
        if self.input is not None and not isinstance(self.input, str):
            raise ConfigError("input must be a path string")
        self.input_format = config_dict.get('input_format')
        if self.input_format is not None and self.input_format not in ('csv', 'xyz'):
            raise ConfigError(f"input_format must be 'csv' or 'xyz', got {self.input_format!r}")

        self.synth = self._synthetic_spec(config_dict.get('synth'))
        if self.input is not None and self.synth is not None:
            raise ConfigError("input and synth are mutually exclusive")
        if command == 'synth' and self.synth is None:
            raise ConfigError("synth needs a generator kind")
        if command != 'synth' and self.input is None and self.synth is None:
            raise ConfigError(f"{command} needs an input file or a synth section")

        self.out_prefix = config_dict.get('out_prefix', DEFAULT_OUT_PREFIX)
        if not isinstance(self.out_prefix, str) or not self.out_prefix:
            raise ConfigError("out_prefix must be a non-empty string")

        # Basis
        dim = config_dict.get('basis_dim')
        controls = config_dict.get('controls')
        degree = config_dict.get('degree', 3)
        knots = config_dict.get('knots', CLAMPED_UNIFORM)
        if dim is None:
            if controls is not None and len(_int_tuple(controls, 'controls')) > 1:
                dim = len(_int_tuple(controls, 'controls'))
            elif self.synth is not None:
                dim = self.synth.dim
            else:
                dim = 1
        if dim not in (1, 2, 3):
            raise ConfigError(f"basis_dim must be 1, 2 or 3, got {dim!r}")
        self.basis_dim = dim
        self.degree = _broadcast(_int_tuple(degree, 'degree'), dim, 'degree')
        if any(p < 0 for p in self.degree):
            raise ConfigError(f"degree must be nonnegative, got {self.degree}")

        if knots == CLAMPED_UNIFORM:
            self.knots = None
            if controls is None:
                controls = [p + 1 for p in self.degree]
                if command != 'synth':
                    logger.warning(f"controls not given; using the minimum {controls} per direction")
            self.controls = _broadcast(_int_tuple(controls, 'controls'), dim, 'controls')
            for c, p in zip(self.controls, self.degree):
                if c < p + 1:
                    raise ConfigError(f"{c} controls cannot carry degree {p}; need at least {p + 1}")
        else:
            self.knots = self._explicit_knots(knots)
            counts = tuple(kv.count for kv in self.knots)
            if controls is not None and _broadcast(_int_tuple(controls, 'controls'), dim, 'controls') != counts:
                raise ConfigError(f"controls {controls} contradict the explicit knot vectors ({counts})")
            self.controls = counts

        if self.synth is not None and command != 'synth' and self.synth.dim != dim:
            raise ConfigError(f"synth generates {self.synth.dim}-D parameters but basis_dim is {dim}")

        self.param = config_dict.get('param')
        if self.param is not None and self.param not in PARAM_MODES:
            raise ConfigError(f"param must be one of {PARAM_MODES}, got {self.param!r}")
        if self.param is not None and self.param != GIVEN and dim > 1:
            raise ConfigError(f"param '{self.param}' assigns curve parameters; basis_dim {dim} needs 'given'")

        # Solver
        alpha = config_dict.get('alpha', AUTO)
        if isinstance(alpha, str) and alpha != AUTO:
            alpha = _positive_number(alpha, 'alpha')
        try:
            self.solver = SolverConfig(
                variant=config_dict.get('variant', WEIGHTED),
                alpha=alpha,
                max_iters=config_dict.get('max_iters', 100000),
                tol_delta=_positive_number(config_dict.get('tol_delta', 1e-10), 'tol_delta'),
                tol_residual_change=_positive_number(
                    config_dict.get('tol_residual_change', 1e-12), 'tol_residual_change'
                ),
                stall_window=config_dict.get('stall_window', 50),
                empty_group_policy=config_dict.get('empty_group', FREEZE),
                trace_timing=bool(config_dict.get('trace_timing', True)),
            )
        except ConfigError as e:
            raise ConfigError(f"solver: {e}")

        self.start = config_dict.get('start', ZERO)
        if self.start not in (ZERO, SUBSET):
            raise ConfigError(f"start must be '{ZERO}' or '{SUBSET}', got {self.start!r}")

        self.workers = _positive_int(config_dict.get('workers', 1), 'workers')
        self.non_interactive = bool(config_dict.get('non_interactive', False))

        # Diagnostics
        self.dense_limit = _positive_int(config_dict.get('dense_limit', DEFAULT_DENSE_LIMIT), 'dense_limit')
        self.tol = _positive_number(config_dict.get('tol', DEFAULT_TOL), 'tol')
        self.zero_tol = config_dict.get('zero_tol')
        if self.zero_tol is not None:
            self.zero_tol = _positive_number(self.zero_tol, 'zero_tol')
        self.with_pinv = bool(config_dict.get('with_pinv', False))

        self.log_level = config_dict.get('log_level', 'INFO')
        if not isinstance(self.log_level, str) or self.log_level.upper() not in VALID_LOG_LEVELS:
            raise ConfigError(f"log_level must be one of: {', '.join(VALID_LOG_LEVELS)}")
        self.log_level = self.log_level.upper()

    def _synthetic_spec(self, synth) -> Optional[SyntheticSpec]:
        if synth is None:
            return None
        if not isinstance(synth, dict):
            raise ConfigError("synth must be a mapping")
        unknown = set(synth) - SYNTH_KEYS
        if unknown:
            raise ConfigError(f"unknown synth key(s): {', '.join(sorted(unknown))}")
        if 'kind' not in synth:
            raise ConfigError("synth needs a generator kind")
        values = dict(synth)
        values.setdefault('seed', self.seed)
        values['samples'] = _int_tuple(values.get('samples', 100), 'synth.samples')
        if values.get('hole') is not None:
            try:
                values['hole'] = tuple((float(lo), float(hi)) for lo, hi in values['hole'])
            except (TypeError, ValueError):
                raise ConfigError(f"synth.hole must be a list of [lo, hi] pairs, got {values['hole']!r}")
        if values['kind'] == 'clustered-params':
            values.setdefault('cluster_multiplicity', 5)
        try:
            values['noise'] = float(values.get('noise', 0.0))
        except (TypeError, ValueError):
            raise ConfigError(f"synth.noise must be a number, got {values.get('noise')!r}")
        return SyntheticSpec(**values)

    def _explicit_knots(self, knots) -> Tuple[KnotVector, ...]:
        if not isinstance(knots, (list, tuple)) or not knots:
            raise ConfigError(f"knots must be '{CLAMPED_UNIFORM}' or a list of knot lists")
        if not isinstance(knots[0], (list, tuple)):
            knots = [knots]
        if len(knots) != self.basis_dim:
            raise ConfigError(f"{len(knots)} knot vectors for basis_dim {self.basis_dim}")
        try:
            return tuple(KnotVector(k, p) for k, p in zip(knots, self.degree))
        except ValueError as e:
            raise ConfigError(f"invalid knot vector: {e}")

    def basis_space(self) -> BasisSpace:
        """The tensor-product basis the run fits with."""
        if self.knots is not None:
            return BasisSpace(self.knots)
        return BasisSpace.clamped_uniform(self.controls, self.degree)

    def param_mode(self, has_params: bool) -> str:
        """Parameterization to apply: explicit setting, else 'given' when the data carry parameters."""
        if self.param is not None:
            if self.param == GIVEN and not has_params:
                raise ConfigError("param 'given' needs parameter columns (u[,v[,w]]) in the input")
            return self.param
        if has_params:
            return GIVEN
        if self.basis_dim > 1:
            raise ConfigError(f"input has no parameters; a {self.basis_dim}-D basis needs u[,v[,w]] columns")
        return CHORD


def merge_overrides(base: dict, overrides: dict) -> dict:
    """Apply non-None flag values over file values; synth keys merge one level deep."""
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if key == 'synth':
            synth = dict(merged.get('synth') or {})
            synth.update({k: v for k, v in value.items() if v is not None})
            if synth:
                merged['synth'] = synth
        else:
            merged[key] = value
    return merged


def read_config_file(config_path: str) -> dict:
    """
    Read a YAML configuration file.

    Raises:
        FileNotFoundError: If the file does not exist
        ConfigError: If the file is not a YAML mapping
    """
    config_path = os.path.expanduser(config_path)
    if not os.path.exists(config_path):
        raise FileNotFoundError(f"Configuration file not found: {config_path}")

    try:
        with open(config_path, 'r') as f:
            config_dict = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML in config file: {e}")

    if config_dict is None:
        return {}
    if not isinstance(config_dict, dict):
        raise ConfigError("Configuration file must contain a YAML dictionary")
    return {str(k).replace('-', '_'): v for k, v in config_dict.items()}


def load_config(config_path: Optional[str] = None, overrides: Optional[dict] = None,
                command: str = 'fit') -> RunConfig:
    """
    Build a RunConfig from an optional YAML file and command-line overrides.

    Args:
        config_path: Path to a YAML file, or None for flags only
        overrides: Flag values; None entries leave file values in place
        command: Subcommand being configured

    Returns:
        RunConfig: Validated configuration

    Raises:
        FileNotFoundError: If the config file is not found
        ConfigError: If the configuration is invalid
    """
    base = read_config_file(config_path) if config_path else {}
    config = RunConfig(merge_overrides(base, overrides or {}), command=command)
    if config_path:
        logger.info(f"Loaded configuration from {config_path}")
    return config
