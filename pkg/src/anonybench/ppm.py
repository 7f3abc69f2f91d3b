"""
Binary PPM (P6) frame files: 8 bits per channel, ``round(255 * x)``, row-major.
"""
import json
import re
from pathlib import Path
from typing import Dict, List

import numpy as np

from .checkpoint import atomic_write_bytes, atomic_write_text
from .exception import ArtifactIOException, ShapeException
from .synthdata import DatasetSplit

_HEADER = re.compile(rb'P6\s+(\d+)\s+(\d+)\s+(\d+)\s')


def quantize(frame: np.ndarray) -> np.ndarray:
    """ (C, H, W) in [0, 1] -> (H, W, 3) uint8; one channel is replicated to grey. """
    if frame.ndim != 3 or frame.shape[0] not in (1, 3):
        raise ShapeException('ppm', frame.shape)
    rgb = np.repeat(frame, 3, axis=0) if frame.shape[0] == 1 else frame
    return np.rint(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)


def encode_ppm(frame: np.ndarray) -> bytes:
    pixels = quantize(frame)
    h, w, _ = pixels.shape
    return f'P6\n{w} {h}\n255\n'.encode('ascii') + pixels.tobytes()


def decode_ppm(blob: bytes, source: str = '<bytes>') -> np.ndarray:
    """ Returns the (3, H, W) frame in [0, 1] that the bytes quantize. """
    match = _HEADER.match(blob)
    if not match or int(match.group(3)) != 255:
        raise ArtifactIOException(f'{source}: not an 8-bit binary PPM', source)
    w, h = int(match.group(1)), int(match.group(2))
    body = blob[match.end():match.end() + w * h * 3]
    if len(body) != w * h * 3:
        raise ArtifactIOException(f'{source}: truncated pixel data', source)
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
    return pixels.transpose(2, 0, 1).astype(np.float64) / 255.0


def write_ppm(path: Path, frame: np.ndarray) -> None:
    atomic_write_bytes(path, encode_ppm(frame))


def read_ppm(path: Path) -> np.ndarray:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise ArtifactIOException(f'Cannot read {path}: {exc.strerror}', str(path)) from exc
    return decode_ppm(blob, str(path))


def export_split(split: DatasetSplit, out_dir: Path) -> Path:
    """
    Writes every sample of the split as PPM frames plus ``labels.json``;
    returns the path of the label index.
    """
    out_dir = Path(out_dir)
    index: Dict[str, List[dict]] = {}
    for part in ('train', 'eval'):
        entries = []
        inputs = split.inputs(part)
        y_t = split.action_labels(part)
        y_b = split.privacy_labels(part)
        for i in range(inputs.shape[0]):
            frames = inputs[i] if split.kind == 'action' else inputs[i][None]
            files = []
            for t, frame in enumerate(frames):
                name = f'{split.kind}_{part}_{i:04d}_f{t:02d}.ppm'
                write_ppm(out_dir / name, frame)
                files.append(name)
            entries.append({'index': i, 'y_t': int(y_t[i]), 'y_b': [int(b) for b in y_b[i]], 'files': files})
        index[part] = entries
    path = out_dir / f'{split.kind}_labels.json'
    atomic_write_text(path, json.dumps(index, indent=1, sort_keys=True) + '\n')
    return path
