"""Configuration management for SDE Perturbation Lab.

A run is described by one INI document with the sections ``[run]``,
``[model]``, ``[grid]`` and ``[checks]``. :func:`load_config` parses and
validates it into a :class:`RunConfig`; :func:`save_config` writes the
normalized document back next to the report.
"""

import configparser
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .defaults import (DEFAULT_BATCH_SIZE, DEFAULT_OUTPUT_DIR, DEFAULT_WORKERS, DEFAULT_VDP,
                       ENV_OUTPUT_DIR, EXPERIMENT_KINDS, RATE_STUDY_LEVELS,
                       RATE_STUDY_REFERENCE_STEPS, SUPPORTED_FORMAT_VERSION)
from ..core.exceptions import ConfigError
from ..utils.versioning import is_supported_format

logger = logging.getLogger(__name__)

SECTIONS = ('run', 'model', 'grid', 'checks')

# Kinds whose estimator needs a minimum sample count
MIN_SAMPLES = {'iag-weak': 100, 'iag-duality': 100}

FIELD_SPECS = ('zero', 'linear', 'polynomial', 'vdp')


def parse_field_spec(text: str) -> Tuple[str, List[float]]:
    """Split a field description such as ``"polynomial: 0, 0, 0, -1"``.

    Returns:
        (name, numeric arguments)

    Raises:
        ConfigError: on an unknown name or a non-numeric argument
    """
    name, _, args = text.partition(':')
    name = name.strip().lower()
    if name not in FIELD_SPECS:
        raise ConfigError(f"Unknown field '{name}', expected one of {', '.join(FIELD_SPECS)}")
    try:
        values = [float(v) for v in args.split(',') if v.strip()]
    except ValueError:
        raise ConfigError(f"Field arguments must be numbers: '{text}'") from None
    if name == 'linear' and len(values) != 1:
        raise ConfigError(f"'linear' takes exactly one rate, got '{text}'")
    if name == 'polynomial' and not values:
        raise ConfigError("'polynomial' needs at least one coefficient")
    return name, values


@dataclass
class RunConfig:
    """Validated run configuration.

    The ``[run]`` section is parsed into typed attributes; the other sections
    are kept as text and read through the typed getters so that the echoed
    document matches what was read.
    """
    experiment: str
    master_seed: int
    samples: int = 1
    workers: int = DEFAULT_WORKERS
    batch_size: int = DEFAULT_BATCH_SIZE
    output_dir: str = DEFAULT_OUTPUT_DIR
    permanent_delete: bool = False
    format_version: str = SUPPORTED_FORMAT_VERSION
    model: Dict[str, str] = field(default_factory=dict)
    grid: Dict[str, str] = field(default_factory=dict)
    checks: Dict[str, str] = field(default_factory=dict)
    source: Optional[str] = None

    def _section(self, section: str) -> Dict[str, str]:
        if section not in ('model', 'grid', 'checks'):
            raise KeyError(section)
        return getattr(self, section)

    def has(self, section: str, key: str) -> bool:
        return key in self._section(section)

    def get_str(self, section: str, key: str, fallback: Optional[str] = None) -> str:
        values = self._section(section)
        if key not in values:
            if fallback is None:
                raise ConfigError(f"Missing [{section}] {key}")
            return fallback
        return values[key].strip()

    def get_float(self, section: str, key: str, fallback: Optional[float] = None) -> float:
        if not self.has(section, key) and fallback is not None:
            return float(fallback)
        text = self.get_str(section, key)
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a number, got '{text}'") from None

    def get_int(self, section: str, key: str, fallback: Optional[int] = None) -> int:
        if not self.has(section, key) and fallback is not None:
            return int(fallback)
        text = self.get_str(section, key)
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be an integer, got '{text}'") from None

    def get_bool(self, section: str, key: str, fallback: bool = False) -> bool:
        if not self.has(section, key):
            return fallback
        text = self.get_str(section, key).lower()
        if text in ('1', 'yes', 'true', 'on'):
            return True
        if text in ('0', 'no', 'false', 'off'):
            return False
        raise ConfigError(f"[{section}] {key} must be a boolean, got '{text}'")

    def get_float_list(self, section: str, key: str,
                       fallback: Optional[List[float]] = None) -> List[float]:
        if not self.has(section, key) and fallback is not None:
            return [float(v) for v in fallback]
        text = self.get_str(section, key)
        try:
            return [float(v) for v in text.split(',') if v.strip()]
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a comma list of numbers, got '{text}'") from None

    def get_int_list(self, section: str, key: str,
                     fallback: Optional[List[int]] = None) -> List[int]:
        if not self.has(section, key) and fallback is not None:
            return [int(v) for v in fallback]
        text = self.get_str(section, key)
        try:
            return [int(v) for v in text.split(',') if v.strip()]
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a comma list of integers, got '{text}'") from None

    def get_names(self, section: str, key: str, fallback: str) -> List[str]:
        return [v.strip() for v in self.get_str(section, key, fallback).split(',') if v.strip()]

    def vdp_values(self) -> Dict[str, object]:
        """Van der Pol parameters from ``[model]`` with the reference defaults."""
        return {
            'alpha': self.get_float('model', 'alpha', DEFAULT_VDP['alpha']),
            'beta': self.get_float('model', 'beta', DEFAULT_VDP['beta']),
            'gamma': self.get_float('model', 'gamma', DEFAULT_VDP['gamma']),
            'delta': self.get_float('model', 'delta', DEFAULT_VDP['delta']),
            'xi': tuple(self.get_float_list('model', 'xi', list(DEFAULT_VDP['xi']))),
            'horizon': self.get_float('model', 'horizon', DEFAULT_VDP['horizon']),
        }

    def to_parser(self) -> configparser.ConfigParser:
        parser = configparser.ConfigParser()
        parser['run'] = {
            'experiment': self.experiment,
            'master_seed': str(self.master_seed),
            'samples': str(self.samples),
            'workers': str(self.workers),
            'batch_size': str(self.batch_size),
            'output_dir': self.output_dir,
            'permanent_delete': str(self.permanent_delete),
            'format_version': self.format_version,
        }
        for section in ('model', 'grid', 'checks'):
            parser[section] = dict(self._section(section))
        return parser

    def as_dict(self) -> Dict[str, Dict[str, str]]:
        """Nested string mapping, used for the report's config echo."""
        parser = self.to_parser()
        return {section: dict(parser[section]) for section in parser.sections()}


def _parse_run(parser: configparser.ConfigParser, source: Optional[str]) -> RunConfig:
    if not parser.has_section('run'):
        raise ConfigError("Missing [run] section")
    run = parser['run']
    try:
        experiment = run.get('experiment', '').strip()
        if 'master_seed' not in run:
            raise ConfigError("[run] master_seed is mandatory")
        return RunConfig(
            experiment=experiment,
            master_seed=run.getint('master_seed'),
            samples=run.getint('samples', 1),
            workers=run.getint('workers', DEFAULT_WORKERS),
            batch_size=run.getint('batch_size', DEFAULT_BATCH_SIZE),
            output_dir=run.get('output_dir', DEFAULT_OUTPUT_DIR).strip(),
            permanent_delete=run.getboolean('permanent_delete', False),
            format_version=run.get('format_version', SUPPORTED_FORMAT_VERSION).strip(),
            model=dict(parser['model']) if parser.has_section('model') else {},
            grid=dict(parser['grid']) if parser.has_section('grid') else {},
            checks=dict(parser['checks']) if parser.has_section('checks') else {},
            source=source,
        )
    except ValueError as e:
        raise ConfigError(f"Invalid [run] value: {e}") from None


def _require_divides(levels: List[int], total: int, what: str) -> None:
    for n in levels:
        if n < 1:
            raise ConfigError(f"{what} must be positive, got {n}")
        if total % n != 0:
            raise ConfigError(f"{what} {n} does not divide {total}")


def validate(config: RunConfig) -> None:
    """Check a configuration for consistency.

    Raises:
        ConfigError: describing the first problem found
    """
    if config.experiment not in EXPERIMENT_KINDS:
        raise ConfigError(f"Unknown experiment '{config.experiment}', expected one of "
                          f"{', '.join(EXPERIMENT_KINDS)}")
    if not is_supported_format(config.format_version):
        raise ConfigError(f"Configuration format {config.format_version} is not supported "
                          f"(this version reads {SUPPORTED_FORMAT_VERSION})")
    if config.master_seed < 0:
        raise ConfigError(f"master_seed must be non-negative, got {config.master_seed}")
    minimum = MIN_SAMPLES.get(config.experiment, 1)
    if config.samples < minimum:
        raise ConfigError(f"{config.experiment} needs at least {minimum} samples, got {config.samples}")
    if config.workers < 1 or config.batch_size < 1:
        raise ConfigError("workers and batch_size must be positive")

    for key in ('drift', 'y_drift'):
        if config.has('model', key):
            parse_field_spec(config.get_str('model', key))
    if config.get_float('model', 'horizon', DEFAULT_VDP['horizon']) <= 0:
        raise ConfigError("[model] horizon must be positive")

    kind = config.experiment
    if kind == 'vdp-rate':
        levels = config.get_int_list('grid', 'levels', list(RATE_STUDY_LEVELS))
        reference = config.get_int('grid', 'reference_steps', RATE_STUDY_REFERENCE_STEPS)
        if not levels:
            raise ConfigError("[grid] levels must list at least one N")
        _require_divides(levels, reference, "Level")
        if reference < 8 * max(levels):
            raise ConfigError(f"reference_steps {reference} must be at least 8 x {max(levels)}")
    elif kind in ('iag-weak', 'iag-duality'):
        fine = config.get_int('grid', 'fine_steps')
        _require_divides([config.get_int('grid', 'outer_steps')], fine, "outer_steps")
    elif kind == 'iag-pathwise':
        fine = config.get_int('grid', 'fine_steps')
        _require_divides(config.get_int_list('grid', 'outer_levels'), fine, "Outer level")
        if config.has('grid', 'scheme_steps'):
            _require_divides([config.get_int('grid', 'scheme_steps')],
                             min(config.get_int_list('grid', 'outer_levels')), "scheme_steps")
    elif kind == 'ag-verify':
        if any(n < 1 for n in config.get_int_list('grid', 'outer_levels')):
            raise ConfigError("Outer levels must be positive")
        if config.get_int('grid', 'inner_steps') < 1:
            raise ConfigError("inner_steps must be positive")
    elif kind in ('expmoment-check', 'flowmoment-check'):
        if config.get_int('grid', 'steps') < 1:
            raise ConfigError("[grid] steps must be positive")
        if kind == 'flowmoment-check' and config.get_float('model', 'p', 2.0) < 1:
            raise ConfigError("[model] p must be at least 1")
    elif kind == 'mgf-check':
        if config.get_int('checks', 'mgf_cases', 1) < 1:
            raise ConfigError("[checks] mgf_cases must be positive")


def load_config(path: str) -> RunConfig:
    """Load and validate a run configuration from an INI file.

    Args:
        path: Path of the INI document

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: if the file is missing, malformed or inconsistent
    """
    if not os.path.exists(path):
        raise ConfigError(f"Configuration file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as e:
        raise ConfigError(f"Cannot parse {path}: {e}") from None
    unknown = [s for s in parser.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"Unknown sections in {path}: {', '.join(unknown)}")
    config = _parse_run(parser, path)
    validate(config)
    logger.debug("Loaded %s configuration from %s", config.experiment, path)
    return config


def save_config(config: RunConfig, path: str) -> None:
    """Save the normalized configuration to an INI file."""
    with open(path, 'w', newline='\n') as f:
        config.to_parser().write(f)


def resolve_output_dir(config: RunConfig, cli_out: Optional[str] = None) -> str:
    """Output directory: ``--out`` beats the environment, which beats the file."""
    if cli_out:
        return cli_out
    return os.environ.get(ENV_OUTPUT_DIR) or config.output_dir
