'''
Versioned checkpoint container.

Layout::

    b'SEQNAVCK'                       8-byte magic
    uint32 little-endian              format version
    uint64 little-endian              header length in bytes
    header                            compact UTF-8 JSON, keys sorted
    array data                        little-endian float64, in header order

The header carries ``config``, ``config_hash``, ``iteration``, ``meta`` and the
shape table ``arrays = [{"name": ..., "shape": [...]}, ...]``. Arrays are written
in name order, so ``save -> load -> save`` reproduces the file byte for byte.
'''

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np

from .errors import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b'SEQNAVCK'
FORMAT_VERSION = 1

_PREFIX = struct.Struct('<8sIQ')


@dataclass
class Checkpoint:
    '''
    :param config:      canonical run configuration dict
    :param config_hash: hash of ``config``
    :param iteration:   completed training iterations
    :param arrays:      named numeric arrays, stored as float64
    :param meta:        JSON-safe extras (generator states, curriculum, ...)
    '''
    config: dict[str, Any]
    config_hash: str
    iteration: int
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        names = sorted(self.arrays)
        data = [np.ascontiguousarray(self.arrays[n], dtype='<f8') for n in names]
        header = {
            'arrays': [{'name': n, 'shape': list(a.shape)} for n, a in zip(names, data)],
            'config': self.config,
            'config_hash': self.config_hash,
            'format_version': FORMAT_VERSION,
            'iteration': int(self.iteration),
            'meta': self.meta,
        }
        try:
            raw = json.dumps(header, sort_keys=True, separators=(',', ':'), allow_nan=False).encode('utf-8')
        except (TypeError, ValueError) as e:
            raise CheckpointError(f'checkpoint header is not JSON-serialisable: {e}') from e
        return b''.join([_PREFIX.pack(MAGIC, FORMAT_VERSION, len(raw)), raw] + [a.tobytes() for a in data])

    @classmethod
    def from_bytes(cls, blob: bytes) -> Checkpoint:
        if len(blob) < _PREFIX.size:
            raise CheckpointError('truncated checkpoint: missing prefix')
        magic, version, header_len = _PREFIX.unpack_from(blob)
        if magic != MAGIC:
            raise CheckpointError('not a seqnav checkpoint (bad magic)')
        if version != FORMAT_VERSION:
            raise CheckpointError(f'unsupported checkpoint format version {version}')
        start = _PREFIX.size
        try:
            header = json.loads(blob[start:start + header_len].decode('utf-8'))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f'corrupt checkpoint header: {e}') from e

        offset = start + header_len
        arrays: dict[str, np.ndarray] = {}
        for entry in header['arrays']:
            shape = tuple(entry['shape'])
            count = int(np.prod(shape, dtype=np.int64))
            end = offset + 8 * count
            if end > len(blob):
                raise CheckpointError(f'truncated checkpoint: array {entry["name"]!r} is incomplete')
            arrays[entry['name']] = np.frombuffer(blob, dtype='<f8', count=count, offset=offset).reshape(shape).copy()
            offset = end
        if offset != len(blob):
            raise CheckpointError(f'{len(blob) - offset} trailing bytes after checkpoint data')
        return cls(config=header['config'], config_hash=header['config_hash'],
                   iteration=header['iteration'], arrays=arrays, meta=header['meta'])

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(self.to_bytes())
        except OSError as e:
            raise CheckpointError(f'cannot write checkpoint {path}: {e}') from e
        logger.info('saved checkpoint %s (iteration %d)', path, self.iteration)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> Checkpoint:
        path = Path(path)
        try:
            blob = path.read_bytes()
        except OSError as e:
            raise CheckpointError(f'cannot read checkpoint {path}: {e}') from e
        try:
            return cls.from_bytes(blob)
        except CheckpointError as e:
            raise CheckpointError(f'{path}: {e}') from e
