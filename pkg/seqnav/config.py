'''
Run configuration: the :class:`RunConfig` tree, YAML loading, named training
variants and the canonical dict / hash used by checkpoints.

A config file lists overrides only::

    preset: heading-free
    seed: 3
    env:
      num_envs: 128
      thresholds: train-heading-free     # or a mapping of ReachThresholds fields
      curriculum: {enabled: false}
    ppo:
      iterations: 300

Unbounded heading thresholds are written ``inf`` or ``.inf``.
'''

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from .env import EnvConfig
from .errors import ConfigError, InvalidArgumentError
from .policy import PpoConfig
from .task import THRESHOLD_PRESETS, UNBOUNDED, ReachThresholds, Unbounded


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        '''JSON-safe nested dict; unbounded thresholds become ``"inf"``.'''
        return _plain(dataclasses.asdict(self))

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(blob.encode('utf-8')).hexdigest()[:16]


RUN_PRESETS: dict[str, dict[str, Any]] = {
    'sequential': {},
    'heading-free': {'env': {'thresholds': 'train-heading-free', 'sequential': {'lambda_theta': 0.0}}},
    'wide': {'env': {'thresholds': 'train-wide', 'sequential': {'lambda_theta': 0.0}}},
    'baseline': {'env': {'reward_mode': 'baseline', 'n_goals': 1, 'n_lookahead': 1}},
    'no-lookahead': {'env': {'n_lookahead': 1}},
    'lookahead-3': {'env': {'n_goals': 3, 'n_lookahead': 3}},
    'no-curriculum': {'env': {'curriculum': {'enabled': False, 'initial_c': 1.0}}},
    'easy': {'env': {'curriculum': {'enabled': False, 'initial_c': 0.0}}},
}

_UNBOUNDABLE = {'eps_theta', 'eps_theta_plus'}
_INF_STRINGS = {'inf', '+inf', '.inf', 'infinity'}


def _plain(value: Any) -> Any:
    if isinstance(value, Unbounded):
        return 'inf'
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _is_inf(value: Any) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in _INF_STRINGS
    return isinstance(value, float) and math.isinf(value) and value > 0


def _scalar(key: str, default: Any, value: Any) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f'{key}: expected a boolean, got {value!r}')
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f'{key}: expected an integer, got {value!r}')
        return value
    if isinstance(default, (float, Unbounded)):
        if _is_inf(value):
            if key.rsplit('.', 1)[-1] not in _UNBOUNDABLE:
                raise ConfigError(f'{key}: only heading thresholds may be unbounded')
            return UNBOUNDED
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f'{key}: expected a number, got {value!r}')
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f'{key}: expected a string, got {value!r}')
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f'{key}: expected a list, got {value!r}')
        if default and len(value) != len(default) and not key.endswith('hidden_sizes'):
            raise ConfigError(f'{key}: expected {len(default)} entries, got {len(value)}')
        proto = default[0] if default else 0.0
        return tuple(_scalar(f'{key}[{i}]', proto, v) for i, v in enumerate(value))
    raise ConfigError(f'{key}: unsupported value {value!r}')


def _merge(base: Any, overrides: Any, prefix: str) -> Any:
    '''Apply a nested override mapping onto the dataclass instance ``base``.'''
    if isinstance(base, ReachThresholds) and isinstance(overrides, str):
        if overrides not in THRESHOLD_PRESETS:
            raise ConfigError(f'{prefix}: unknown threshold preset {overrides!r}; '
                              f'choose from {sorted(THRESHOLD_PRESETS)}')
        return THRESHOLD_PRESETS[overrides].thresholds
    if not isinstance(overrides, dict):
        raise ConfigError(f'{prefix or "config"}: expected a mapping, got {overrides!r}')

    names = {f.name for f in dataclasses.fields(base)}
    changes = {}
    for key, value in overrides.items():
        dotted = f'{prefix}.{key}' if prefix else str(key)
        if key not in names:
            raise ConfigError(f'unknown config key {dotted!r}')
        current = getattr(base, key)
        if dataclasses.is_dataclass(current):
            changes[key] = _merge(current, value, dotted)
        else:
            changes[key] = _scalar(dotted, current, value)
    try:
        return dataclasses.replace(base, **changes)
    except InvalidArgumentError as e:
        raise ConfigError(f'{prefix or "config"}: {e}') from e


def run_config_from_dict(data: Optional[dict[str, Any]], preset: Optional[str] = None) -> RunConfig:
    '''
    Build a :class:`RunConfig` from an override mapping.

    :param preset:  named variant applied before ``data``; overrides the
                    mapping's own ``preset`` key
    '''
    data = dict(data or {})
    name = preset or data.pop('preset', None)
    data.pop('preset', None)
    cfg = RunConfig()
    if name is not None:
        if name not in RUN_PRESETS:
            raise ConfigError(f'unknown run preset {name!r}; choose from {sorted(RUN_PRESETS)}')
        cfg = _merge(cfg, RUN_PRESETS[name], '')
    return _merge(cfg, data, '')


def load_run_config(path: Optional[Union[str, Path]] = None, preset: Optional[str] = None) -> RunConfig:
    '''Read a YAML override file (or nothing) into a :class:`RunConfig`.'''
    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            loaded = yaml.safe_load(path.read_text())
        except OSError as e:
            raise ConfigError(f'cannot read config {path}: {e}') from e
        except yaml.YAMLError as e:
            raise ConfigError(f'{path}: invalid YAML: {e}') from e
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError(f'{path}: top level must be a mapping')
        data = loaded or {}
    return run_config_from_dict(data, preset)
