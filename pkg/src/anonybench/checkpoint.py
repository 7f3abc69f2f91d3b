"""
Checkpoint file codec.

Layout (all integers little-endian)::

    b'ANBCKPT1'
    uint64 header length
    header JSON (UTF-8): {"format": 1, "meta": {...},
                          "arrays": [{"name", "shape", "offset", "count"}, ...]}
    per array: uint64 element count, then count float64 values (row-major)

``offset`` is the byte position of the array's length prefix relative to the
start of the data section. The round trip is bit-exact.
"""
import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np

from .exception import ArtifactIOException, ConfigException

MAGIC = b'ANBCKPT1'
FORMAT_VERSION = 1
_U64 = struct.Struct('<Q')


def encode_arrays(arrays: Dict[str, np.ndarray], meta: Dict[str, Any]) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        values = np.ascontiguousarray(arr, dtype='<f8')
        payload = _U64.pack(values.size) + values.tobytes()
        entries.append({'name': name, 'shape': list(values.shape), 'offset': offset, 'count': int(values.size)})
        chunks.append(payload)
        offset += len(payload)
    header = json.dumps(
        {'format': FORMAT_VERSION, 'meta': meta, 'arrays': entries},
        sort_keys=True, separators=(',', ':')
    ).encode('utf-8')
    return MAGIC + _U64.pack(len(header)) + header + b''.join(chunks)


def decode_arrays(blob: bytes, source: str = '<bytes>') -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    if not blob.startswith(MAGIC):
        raise ConfigException(f'{source}: not a checkpoint file')
    try:
        (header_len,) = _U64.unpack_from(blob, len(MAGIC))
        start = len(MAGIC) + _U64.size
        header = json.loads(blob[start:start + header_len].decode('utf-8'))
        data = memoryview(blob)[start + header_len:]
        arrays: Dict[str, np.ndarray] = {}
        for entry in header['arrays']:
            (count,) = _U64.unpack_from(data, entry['offset'])
            if count != entry['count']:
                raise ConfigException(f'{source}: length prefix of {entry["name"]} disagrees with header')
            first = entry['offset'] + _U64.size
            values = np.frombuffer(data[first:first + 8 * count], dtype='<f8').astype(np.float64)
            arrays[entry['name']] = values.reshape(entry['shape'])
    except (struct.error, KeyError, ValueError) as exc:
        raise ConfigException(f'{source}: corrupt checkpoint ({exc})') from exc
    if header.get('format') != FORMAT_VERSION:
        raise ConfigException(f'{source}: unsupported checkpoint format {header.get("format")}')
    return arrays, header.get('meta', {})


def atomic_write_bytes(path: Path, blob: bytes) -> None:
    """ Writes to a temporary file in the target directory, then renames it into place. """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f'.{path.name}.', dir=path.parent)
        try:
            with os.fdopen(fd, 'wb') as fh:
                fh.write(blob)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise ArtifactIOException(f'Cannot write {path}: {exc.strerror}', str(path)) from exc


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode('utf-8'))


def read_bytes(path: Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise ConfigException(f'Checkpoint {path} does not exist', str(path)) from exc
    except OSError as exc:
        raise ArtifactIOException(f'Cannot read {path}: {exc.strerror}', str(path)) from exc


def file_digest(path: Path) -> str:
    return hashlib.sha256(read_bytes(path)).hexdigest()


@dataclass
class Checkpoint:
    """
    Everything needed to continue or evaluate a run: network parameters keyed
    by network name, optimizer state, epoch cursor, config digest and the
    metrics gathered so far.
    """
    networks: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)
    optimizer: Dict[str, np.ndarray] = field(default_factory=dict)
    epoch: int = 0
    config_digest: str = ''
    metrics: Dict[str, Any] = field(default_factory=dict)
    meta: Dict[str, Any] = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        arrays: Dict[str, np.ndarray] = {}
        for net, state in self.networks.items():
            for name, arr in state.items():
                arrays[f'net/{net}/{name}'] = arr
        for name, arr in self.optimizer.items():
            arrays[f'optim/{name}'] = arr
        meta = {
            'epoch': self.epoch,
            'config_digest': self.config_digest,
            'metrics': self.metrics,
            'meta': self.meta,
            'networks': list(self.networks),
        }
        return encode_arrays(arrays, meta)

    @classmethod
    def from_bytes(cls, blob: bytes, source: str = '<bytes>') -> 'Checkpoint':
        arrays, meta = decode_arrays(blob, source)
        ckpt = cls(epoch=int(meta.get('epoch', 0)), config_digest=meta.get('config_digest', ''),
                   metrics=meta.get('metrics', {}), meta=meta.get('meta', {}))
        for net in meta.get('networks', []):
            ckpt.networks[net] = {}
        for key, arr in arrays.items():
            kind, _, rest = key.partition('/')
            if kind == 'net':
                net, _, name = rest.partition('/')
                ckpt.networks.setdefault(net, {})[name] = arr
            elif kind == 'optim':
                ckpt.optimizer[rest] = arr
        return ckpt

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def save(self, path: Path) -> str:
        blob = self.to_bytes()
        atomic_write_bytes(path, blob)
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def load(cls, path: Path) -> 'Checkpoint':
        return cls.from_bytes(read_bytes(path), str(path))
