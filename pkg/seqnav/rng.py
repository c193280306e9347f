'''
Reproducible random streams.

Every environment episode draws from its own counter-based Philox stream keyed
by ``(seed, env_index, episode)``, so results do not depend on the order in
which environments are reset or stepped.
'''

from __future__ import annotations

from typing import Any

import numpy as np


def episode_stream(seed: int, env_index: int, episode: int) -> np.random.Generator:
    '''Independent generator for one episode of one environment.'''
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, env_index, episode])))


def batch_stream(seed: int, tag: int) -> np.random.Generator:
    '''
    Generator for batch-level draws (observation noise and the like). The spawn
    key keeps it disjoint from every :func:`episode_stream`.
    '''
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, tag], spawn_key=(1,))))


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, np.ndarray):
        return [int(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    return value


def generator_state(gen: np.random.Generator) -> dict[str, Any]:
    '''JSON-safe copy of a Philox generator state.'''
    return _jsonable(gen.bit_generator.state)


def restore_generator(state: dict[str, Any]) -> np.random.Generator:
    '''Rebuild a generator from :func:`generator_state` output.'''
    bitgen = np.random.Philox()
    inner = {k: np.array(v, dtype=np.uint64) for k, v in state['state'].items()}
    bitgen.state = {**state,
                    'state': inner,
                    'buffer': np.array(state['buffer'], dtype=np.uint64)}
    return np.random.Generator(bitgen)
