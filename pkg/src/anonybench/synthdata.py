"""
Deterministic synthetic benchmark.

A clip is the sum of an action component (a bright blob leaving the frame
centre along a class-specific direction, plus pixel noise) and a privacy
component (per-attribute hue offset and corner glyph, static over time),
clipped to [0, 1]. The action split carries clips, the privacy split still
frames; labels are drawn independently so attributes carry no information
about the action class.
"""
import hashlib
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import DataConfig, VARIANT_NOVEL
from .exception import DomainException
from .seeding import derive_seed, rng_for

logger = logging.getLogger(__name__)

BLOB = 3
GLYPH = 3
# 3x3 checker; the glyph of attribute k sits in corner k
GLYPH_PATTERN = np.array([[1, 0, 1], [0, 1, 0], [1, 0, 1]], dtype=np.float64)


@dataclass
class Clip:
    frames: np.ndarray          # (T, C, H, W) in [0, 1]
    y_t: int
    y_b: np.ndarray             # (K_privacy,) multi-hot
    seed: int
    action: np.ndarray          # action component, (T, C, H, W)
    privacy: np.ndarray         # privacy component, (C, H, W), static over time

    @property
    def length(self) -> int:
        return self.frames.shape[0]


@dataclass
class PrivacySample:
    frame: np.ndarray           # (C, H, W) in [0, 1]
    y_b: np.ndarray
    seed: int
    y_t: int = 0                # action class of the clip the frame was cut from


Sample = Union[Clip, PrivacySample]


@dataclass
class DatasetSplit:
    """ Train and eval samples of one pipeline, with stacked views. """
    kind: str
    train: List[Sample]
    eval: List[Sample]
    config: DataConfig
    seed: int
    _cache: dict = field(default_factory=dict, repr=False)

    def inputs(self, part: str) -> np.ndarray:
        """ Stacked clips (N, T, C, H, W) or frames (N, C, H, W) of ``part``. """
        key = ('inputs', part)
        if key not in self._cache:
            samples = self._part(part)
            if self.kind == 'action':
                self._cache[key] = np.stack([s.frames for s in samples])
            else:
                self._cache[key] = np.stack([s.frame for s in samples])
        return self._cache[key]

    def action_labels(self, part: str) -> np.ndarray:
        return np.array([s.y_t for s in self._part(part)], dtype=np.int64)

    def privacy_labels(self, part: str) -> np.ndarray:
        return np.stack([s.y_b for s in self._part(part)]).astype(np.int64)

    def _part(self, part: str) -> List[Sample]:
        if part == 'train':
            return self.train
        if part == 'eval':
            return self.eval
        raise DomainException('DatasetSplit', f'unknown part {part!r}')

    def digest(self) -> str:
        h = hashlib.sha256()
        for part in ('train', 'eval'):
            h.update(np.ascontiguousarray(self.inputs(part), dtype='<f8').tobytes())
        return h.hexdigest()


def _check_labels(y_t: int, y_b: np.ndarray, config: DataConfig) -> np.ndarray:
    if not 0 <= int(y_t) < config.num_actions:
        raise DomainException('make_clip', f'action label {y_t} outside [0, {config.num_actions})')
    y_b = np.asarray(y_b, dtype=np.int64)
    if y_b.shape != (config.num_attributes,) or np.any((y_b != 0) & (y_b != 1)):
        raise DomainException('make_clip', f'privacy labels must be {config.num_attributes} bits, got {y_b.tolist()}')
    return y_b


def trajectory(y_t: int, config: DataConfig, offset: Tuple[int, int] = (0, 0)) -> List[Tuple[int, int]]:
    """ Blob centre (row, col) per frame for action class ``y_t``. """
    angle = 2.0 * np.pi * y_t / config.num_actions
    if config.variant == VARIANT_NOVEL:
        angle += np.pi / config.num_actions
    radius = min(config.height, config.width) / 2.0 - 2.0
    r0 = config.height // 2 + offset[0]
    c0 = config.width // 2 + offset[1]
    out = []
    for t in range(config.frames):
        frac = t / (config.frames - 1) if config.frames > 1 else 0.0
        out.append((r0 + int(round(radius * frac * np.sin(angle))), c0 + int(round(radius * frac * np.cos(angle)))))
    return out


def _blob_mask(centre: Tuple[int, int], config: DataConfig) -> np.ndarray:
    mask = np.zeros((config.height, config.width))
    r, c = centre
    half = BLOB // 2
    mask[max(r - half, 0):max(r + half + 1, 0), max(c - half, 0):max(c + half + 1, 0)] = 1.0
    return mask


def _glyph_corner(k: int, config: DataConfig) -> Tuple[int, int]:
    corner = (k + 2) % 4 if config.variant == VARIANT_NOVEL else k % 4
    row = 1 if corner in (0, 1) else config.height - 1 - GLYPH
    col = 1 if corner in (0, 2) else config.width - 1 - GLYPH
    return row, col


def _hue_channel(k: int, config: DataConfig) -> int:
    return (k + 1) % config.channels if config.variant == VARIANT_NOVEL else k % config.channels


def action_component(y_t: int, seed: int, config: DataConfig) -> np.ndarray:
    rng = rng_for(seed, 'action')
    offset = tuple(int(v) for v in rng.integers(-1, 2, size=2))
    shape = (config.frames, config.channels, config.height, config.width)
    out = np.full(shape, config.background)
    for t, centre in enumerate(trajectory(y_t, config, offset)):
        out[t] += config.blob_level * _blob_mask(centre, config)[None, :, :]
    return out + rng.normal(0.0, config.noise, size=shape) if config.noise > 0 else out


def privacy_component(y_b: np.ndarray, config: DataConfig) -> np.ndarray:
    out = np.zeros((config.channels, config.height, config.width))
    for k, bit in enumerate(y_b):
        if not bit:
            continue
        out[_hue_channel(k, config)] += config.hue_offset
        row, col = _glyph_corner(k, config)
        out[:, row:row + GLYPH, col:col + GLYPH] += config.glyph_level * GLYPH_PATTERN
    return out


def make_clip(y_t: int, y_b: Sequence[int], seed: int, config: Optional[DataConfig] = None) -> Clip:
    """
    Builds one clip; the same (labels, seed, config) always gives the same bytes.

    :param y_t: action class id in [0, K_action)
    :param y_b: K_privacy bits
    :param seed: per-clip seed
    """
    config = config or DataConfig()
    y_b = _check_labels(y_t, y_b, config)
    action = action_component(int(y_t), seed, config)
    privacy = privacy_component(y_b, config)
    frames = np.clip(action + privacy[None], 0.0, 1.0)
    return Clip(frames, int(y_t), y_b, int(seed), action, privacy)


def _stratified(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    return rng.permutation(np.arange(n) % k)


def _stratified_bits(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    return np.stack([rng.permutation(np.arange(n) % 2) for _ in range(k)], axis=1)


def _stratified_labels(rng: np.random.Generator, n: int, config: DataConfig) -> Tuple[np.ndarray, np.ndarray]:
    """ Stratified action classes, with every attribute bit balanced inside each class. """
    y_t = _stratified(rng, n, config.num_actions)
    y_b = np.zeros((n, config.num_attributes), dtype=np.int64)
    for k in range(config.num_actions):
        members = np.flatnonzero(y_t == k)
        if members.size:
            y_b[members] = _stratified_bits(rng, members.size, config.num_attributes)
    return y_t, y_b


def _make_action_part(config: DataConfig, seed: int, part: str, n: int) -> List[Clip]:
    y_t, y_b = _stratified_labels(rng_for(seed, 'labels', 'action', part), n, config)
    return [make_clip(int(y_t[i]), y_b[i], derive_seed(seed, 'action', part, i), config) for i in range(n)]


def _make_privacy_part(config: DataConfig, seed: int, part: str, n: int) -> List[PrivacySample]:
    rng = rng_for(seed, 'labels', 'privacy', part)
    y_t, y_b = _stratified_labels(rng, n, config)
    t = rng.integers(0, config.frames, size=n)
    out = []
    for i in range(n):
        clip = make_clip(int(y_t[i]), y_b[i], derive_seed(seed, 'privacy', part, i), config)
        out.append(PrivacySample(clip.frames[t[i]].copy(), clip.y_b, clip.seed, clip.y_t))
    return out


def make_splits(config: Optional[DataConfig] = None, seed: int = 0) -> Tuple[DatasetSplit, DatasetSplit]:
    """
    Generates the action split (clips, y_t) and the privacy split (still frames, y_b).
    Train and eval samples draw from disjoint derived seeds.
    """
    config = config or DataConfig()
    config.validate()
    action = DatasetSplit(
        'action',
        _make_action_part(config, seed, 'train', config.n_action_train),
        _make_action_part(config, seed, 'eval', config.n_action_eval),
        config, seed
    )
    privacy = DatasetSplit(
        'privacy',
        _make_privacy_part(config, seed, 'train', config.n_privacy_train),
        _make_privacy_part(config, seed, 'eval', config.n_privacy_eval),
        config, seed
    )
    logger.info('Generated %d/%d action clips and %d/%d privacy frames (variant %s)',
                len(action.train), len(action.eval), len(privacy.train), len(privacy.eval), config.variant)
    return action, privacy


def dataset_digest(action: DatasetSplit, privacy: DatasetSplit) -> str:
    return hashlib.sha256((action.digest() + privacy.digest()).encode('ascii')).hexdigest()


def augment(frame: np.ndarray, rng: np.random.Generator, config: DataConfig) -> np.ndarray:
    """
    Random crop-and-resize, horizontal flip, per-channel jitter and optional
    random erase of a single (C, H, W) frame.
    """
    c, h, w = frame.shape
    ch = max(1, int(round(config.crop_scale * h)))
    cw = max(1, int(round(config.crop_scale * w)))
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    rows = top + (np.arange(h) * ch) // h
    cols = left + (np.arange(w) * cw) // w
    out = frame[:, rows][:, :, cols]
    if rng.random() < config.flip_prob:
        out = out[:, :, ::-1]
    out = out + rng.uniform(-config.jitter, config.jitter, size=(c, 1, 1))
    if config.erase_prob > 0 and rng.random() < config.erase_prob:
        eh = int(rng.integers(max(1, h // 8), max(2, h // 4) + 1))
        ew = int(rng.integers(max(1, w // 8), max(2, w // 4) + 1))
        r0 = int(rng.integers(0, h - eh + 1))
        c0 = int(rng.integers(0, w - ew + 1))
        out = out.copy()
        out[:, r0:r0 + eh, c0:c0 + ew] = 0.0
    return np.clip(out, 0.0, 1.0)


def sample_frame_pair(sample: Sample, skip: int, rng: np.random.Generator,
                      config: Optional[DataConfig] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Positive pair for the contrastive branch: ``(frame_t, frame_{t+skip})``
    of a clip with t uniform over the valid range, or two independent
    augmentations of a still frame.
    """
    config = config or DataConfig()
    if isinstance(sample, Clip):
        if not 0 <= skip < sample.length:
            raise DomainException('sample_frame_pair', f'skip {skip} must be in [0, {sample.length})')
        t = int(rng.integers(0, sample.length - skip))
        return sample.frames[t], sample.frames[t + skip]
    return augment(sample.frame, rng, config), augment(sample.frame, rng, config)


def sample_pair_batch(samples: Sequence[Sample], skip: int, rng: np.random.Generator,
                      config: DataConfig) -> Tuple[np.ndarray, np.ndarray]:
    pairs = [sample_frame_pair(s, skip, rng, config) for s in samples]
    return np.stack([a for a, _ in pairs]), np.stack([b for _, b in pairs])


def action_oracle(frames: np.ndarray, config: DataConfig) -> int:
    """
    Matched filter: the class whose blob trajectory (over all centre jitters)
    collects the most intensity, summed over channels.
    """
    intensity = frames.sum(axis=1)
    best, best_score = 0, -np.inf
    for k in range(config.num_actions):
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                path = trajectory(k, config, (dr, dc))
                score = sum(float((intensity[t] * _blob_mask(p, config)).sum()) for t, p in enumerate(path))
                if score > best_score:
                    best, best_score = k, score
    return best


def privacy_oracle_scores(frame: np.ndarray, config: DataConfig) -> np.ndarray:
    """
    Per-attribute evidence: hue excess of the attribute's channel plus
    on-minus-off contrast of its glyph, each in units of its nominal level.
    """
    scores = np.zeros(config.num_attributes)
    channel_means = frame.mean(axis=(1, 2))
    for k in range(config.num_attributes):
        ch = _hue_channel(k, config)
        others = np.delete(channel_means, ch) if config.channels > 1 else np.zeros(1)
        hue = (channel_means[ch] - others.mean()) / config.hue_offset if config.hue_offset else 0.0
        row, col = _glyph_corner(k, config)
        patch = frame[:, row:row + GLYPH, col:col + GLYPH].mean(axis=0)
        on = patch[GLYPH_PATTERN == 1].mean()
        off = patch[GLYPH_PATTERN == 0].mean()
        glyph = (on - off) / config.glyph_level if config.glyph_level else 0.0
        scores[k] = hue + glyph
    return scores
