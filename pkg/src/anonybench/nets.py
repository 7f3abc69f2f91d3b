"""
Tiny analogs of the three networks of the minimax scheme: the anonymizer
(image to image), the utility classifier (clip to logits) and the budget
encoder (frame to projection), plus the probe variants trained for evaluation.

Frames are laid out (N, C, H, W), clips (N, T, C, H, W).
"""
import hashlib
from abc import ABC, abstractmethod
from contextlib import contextmanager
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from overrides import overrides

from . import ops
from .exception import ConfigException, DomainException, ShapeException
from .seeding import rng_for
from .tensor import Tensor

ANON_OUTPUT_SIGMOID = 'sigmoid'
ANON_OUTPUT_LINEAR = 'linear'
ANON_OUTPUTS = (ANON_OUTPUT_SIGMOID, ANON_OUTPUT_LINEAR)

ARCH_CONV = 'conv'
ARCH_LINEAR = 'linear'
PROBE_ARCHS = (ARCH_CONV, ARCH_LINEAR)

KERNEL = 3


class Parameters:
    """
    Ordered collection of named leaf tensors belonging to one network.
    """
    def __init__(self, owner: str):
        self._owner: str = owner
        self._tensors: Dict[str, Tensor] = {}

    @property
    def owner(self) -> str:
        return self._owner

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._tensors:
            raise ConfigException(f'{self._owner}: duplicate parameter {name}', name)
        t = Tensor(data, requires_grad=True, name=f'{self._owner}/{name}')
        self._tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self._tensors.values())

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self) -> List[Tuple[str, Tensor]]:
        return list(self._tensors.items())

    def names(self) -> List[str]:
        return list(self._tensors)

    def count(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def state(self) -> Dict[str, np.ndarray]:
        return {name: t.numpy() for name, t in self._tensors.items()}

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        missing = set(self._tensors) - set(state)
        if missing:
            raise ConfigException(f'{self._owner}: missing parameters {sorted(missing)}', sorted(missing)[0])
        for name, t in self._tensors.items():
            if state[name].shape != t.shape:
                raise ConfigException(
                    f'{self._owner}/{name}: checkpoint shape {state[name].shape} does not match {t.shape}',
                    name
                )
            t.assign(np.asarray(state[name], dtype=np.float64))

    def copy(self, owner: Optional[str] = None) -> 'Parameters':
        """ Independent collection with the same names and values. """
        out = Parameters(owner or self._owner)
        for name, t in self._tensors.items():
            out.add(name, t.data)
        return out

    def digest(self) -> str:
        """ SHA-256 over names, shapes and little-endian values. """
        h = hashlib.sha256()
        for name, t in self._tensors.items():
            h.update(name.encode('utf-8'))
            h.update(repr(t.shape).encode('ascii'))
            h.update(t.data.astype('<f8').tobytes())
        return h.hexdigest()

    @contextmanager
    def frozen(self) -> Iterator['Parameters']:
        """ Excludes the parameters from differentiation for the duration of the block. """
        previous = [t.requires_grad for t in self._tensors.values()]
        for t in self._tensors.values():
            t.requires_grad = False
        try:
            yield self
        finally:
            for t, flag in zip(self._tensors.values(), previous):
                t.requires_grad = flag

    @contextmanager
    def bound(self, values: Sequence[Tensor]) -> Iterator['Parameters']:
        """ Stands `values`, in parameter order, in for the leaves for the duration of the block. """
        if len(values) != len(self._tensors):
            raise ShapeException(f'{self._owner}/bound', (len(self._tensors),), (len(values),))
        for (name, t), value in zip(self._tensors.items(), values):
            if value.shape != t.shape:
                raise ShapeException(f'{self._owner}/{name}', t.shape, value.shape)
        previous = self._tensors
        self._tensors = dict(zip(previous, values))
        try:
            yield self
        finally:
            self._tensors = previous


def _uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    s = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-s, s, size=shape)


class Network(ABC):
    """
    Base of all networks: owns a :class:`Parameters` collection initialised
    uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)] from a seeded generator.
    """
    def __init__(self, name: str, seed: int):
        self._params = Parameters(name)
        self._rng = rng_for(seed, 'init', name)

    @property
    def name(self) -> str:
        return self._params.owner

    @property
    def params(self) -> Parameters:
        return self._params

    def _conv(self, name: str, c_in: int, c_out: int) -> None:
        fan_in = c_in * KERNEL * KERNEL
        self._params.add(f'{name}_w', _uniform(self._rng, (c_out, c_in, KERNEL, KERNEL), fan_in))
        self._params.add(f'{name}_b', _uniform(self._rng, (c_out,), fan_in))

    def _dense(self, name: str, f_in: int, f_out: int) -> None:
        self._params.add(f'{name}_w', _uniform(self._rng, (f_in, f_out), f_in))
        self._params.add(f'{name}_b', _uniform(self._rng, (f_out,), f_in))

    def _apply_conv(self, name: str, x: Tensor) -> Tensor:
        return ops.conv2d(x, self._params[f'{name}_w'], self._params[f'{name}_b'])

    def _apply_dense(self, name: str, x: Tensor) -> Tensor:
        return ops.linear(x, self._params[f'{name}_w'], self._params[f'{name}_b'])

    @abstractmethod
    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError('Subclasses of Network must implement `forward`')

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)


def _check_frames(kind: str, x: Tensor, channels: int) -> None:
    if x.ndim != 4 or x.shape[1] != channels:
        raise ShapeException(kind, x.shape, (-1, channels, -1, -1))
    if x.shape[2] % 4 or x.shape[3] % 4:
        raise ShapeException(kind, x.shape)


def _check_clips(kind: str, x: Tensor, channels: int) -> None:
    if x.ndim != 5 or x.shape[2] != channels:
        raise ShapeException(kind, x.shape, (-1, -1, channels, -1, -1))
    if x.shape[1] < 1:
        raise DomainException(kind, 'empty clip')


class Anonymizer(Network):
    """
    Encoder-decoder f_A: two conv+relu+pool stages, a bottleneck conv, two
    upsample+conv stages and an output conv squashed into [0, 1].
    """
    def __init__(
            self,
            channels: int,
            width1: int = 8,
            width2: int = 16,
            skip: bool = False,
            output: str = ANON_OUTPUT_SIGMOID,
            seed: int = 0
    ):
        super().__init__('anonymizer', seed)
        if output not in ANON_OUTPUTS:
            raise ConfigException(f'Unknown anonymizer output mode {output!r}', 'anon_output')
        self._channels = channels
        self._skip = skip
        self._output = output
        self._conv('enc1', channels, width1)
        self._conv('enc2', width1, width2)
        self._conv('mid', width2, width2)
        self._conv('dec1', width2, width1)
        self._conv('dec2', width1, width1)
        self._conv('out', width1 + (channels if skip else 0), channels)

    @property
    def channels(self) -> int:
        return self._channels

    @property
    def output_mode(self) -> str:
        return self._output

    @overrides
    def forward(self, x: Tensor) -> Tensor:
        _check_frames('anonymize', x, self._channels)
        h = ops.mean_pool2x2(ops.relu(self._apply_conv('enc1', x)))
        h = ops.mean_pool2x2(ops.relu(self._apply_conv('enc2', h)))
        h = ops.relu(self._apply_conv('mid', h))
        h = ops.relu(self._apply_conv('dec1', ops.upsample2x(h)))
        h = ops.relu(self._apply_conv('dec2', ops.upsample2x(h)))
        if self._skip:
            h = ops.concat([h, x], axis=1)
        out = self._apply_conv('out', h)
        return ops.sigmoid(out) if self._output == ANON_OUTPUT_SIGMOID else out

    def anonymize_clips(self, clips: Tensor) -> Tensor:
        """ Applies f_A frame by frame to a (N, T, C, H, W) batch. """
        n, t, c, h, w = clips.shape
        frames = ops.reshape(clips, (n * t, c, h, w))
        return ops.reshape(self.forward(frames), (n, t, c, h, w))


class FrameEncoder(Network, ABC):
    """
    Conv+relu+pool twice, then flatten. Shared trunk of the utility
    classifier, the budget encoder and the privacy probe.
    """
    def __init__(self, name: str, channels: int, height: int, width: int, width1: int, width2: int, seed: int):
        super().__init__(name, seed)
        self._channels = channels
        self._conv('enc1', channels, width1)
        self._conv('enc2', width1, width2)
        self._feature_dim = width2 * (height // 4) * (width // 4)

    @property
    def feature_dim(self) -> int:
        return self._feature_dim

    def encode_frames(self, x: Tensor) -> Tensor:
        _check_frames(self.name, x, self._channels)
        h = ops.mean_pool2x2(ops.relu(self._apply_conv('enc1', x)))
        h = ops.mean_pool2x2(ops.relu(self._apply_conv('enc2', h)))
        return ops.reshape(h, (x.shape[0], self._feature_dim))


class ActionClassifier(Network, ABC):
    """ Clip classifier interface: (N, T, C, H, W) -> (N, K_action) logits. """
    @abstractmethod
    def features(self, clips: Tensor) -> Tensor:
        """ Clip-level representation fed to the logit layer. """
        raise NotImplementedError('Subclasses of ActionClassifier must implement `features`')


class ConvActionClassifier(FrameEncoder, ActionClassifier):
    """ Per-frame conv trunk, temporal mean, linear head. """
    def __init__(self, channels: int, height: int, width: int, num_actions: int,
                 width1: int = 8, width2: int = 16, seed: int = 0, name: str = 'utility'):
        super().__init__(name, channels, height, width, width1, width2, seed)
        self._dense('head', self.feature_dim, num_actions)

    @overrides
    def features(self, clips: Tensor) -> Tensor:
        _check_clips('classify_action', clips, self._channels)
        n, t, c, h, w = clips.shape
        per_frame = self.encode_frames(ops.reshape(clips, (n * t, c, h, w)))
        return ops.mean(ops.reshape(per_frame, (n, t, self.feature_dim)), axis=1)

    @overrides
    def forward(self, x: Tensor) -> Tensor:
        return self._apply_dense('head', self.features(x))


class LinearActionClassifier(ActionClassifier):
    """ Single linear layer over the flattened temporal-mean frame. """
    def __init__(self, channels: int, height: int, width: int, num_actions: int,
                 seed: int = 0, name: str = 'utility_linear'):
        super().__init__(name, seed)
        self._channels = channels
        self._dim = channels * height * width
        self._dense('head', self._dim, num_actions)

    @overrides
    def features(self, clips: Tensor) -> Tensor:
        _check_clips('classify_action', clips, self._channels)
        return ops.reshape(ops.mean(clips, axis=1), (clips.shape[0], self._dim))

    @overrides
    def forward(self, x: Tensor) -> Tensor:
        return self._apply_dense('head', self.features(x))


class BudgetEncoder(FrameEncoder):
    """ f_B: conv trunk, linear embedding and a linear-relu-linear projection head. """
    def __init__(self, channels: int, height: int, width: int, width1: int = 8, width2: int = 16,
                 hidden: int = 32, projection_dim: int = 16, seed: int = 0, name: str = 'budget'):
        super().__init__(name, channels, height, width, width1, width2, seed)
        self._projection_dim = projection_dim
        self._dense('embed', self.feature_dim, hidden)
        self._dense('proj1', hidden, hidden)
        self._dense('proj2', hidden, projection_dim)

    @property
    def projection_dim(self) -> int:
        return self._projection_dim

    @overrides
    def forward(self, x: Tensor) -> Tensor:
        h = self._apply_dense('embed', self.encode_frames(x))
        return self._apply_dense('proj2', ops.relu(self._apply_dense('proj1', h)))


class PrivacyClassifier(Network, ABC):
    """ Multi-label attribute probe interface: (N, C, H, W) -> (N, K_privacy) logits. """


class ConvPrivacyClassifier(FrameEncoder, PrivacyClassifier):
    """ f_B' with the projection head swapped for a K_privacy-logit head. """
    def __init__(self, channels: int, height: int, width: int, num_attributes: int,
                 width1: int = 8, width2: int = 16, hidden: int = 32, seed: int = 0,
                 name: str = 'privacy_probe'):
        super().__init__(name, channels, height, width, width1, width2, seed)
        self._dense('embed', self.feature_dim, hidden)
        self._dense('head', hidden, num_attributes)

    @overrides
    def forward(self, x: Tensor) -> Tensor:
        h = ops.relu(self._apply_dense('embed', self.encode_frames(x)))
        return self._apply_dense('head', h)


class LinearPrivacyClassifier(PrivacyClassifier):
    """ Single linear layer over the flattened frame. """
    def __init__(self, channels: int, height: int, width: int, num_attributes: int,
                 seed: int = 0, name: str = 'privacy_probe_linear'):
        super().__init__(name, seed)
        self._channels = channels
        self._dim = channels * height * width
        self._dense('head', self._dim, num_attributes)

    @overrides
    def forward(self, x: Tensor) -> Tensor:
        _check_frames(self.name, x, self._channels)
        return self._apply_dense('head', ops.reshape(x, (x.shape[0], self._dim)))


def build_action_classifier(arch: str, channels: int, height: int, width: int, num_actions: int,
                            width1: int, width2: int, seed: int, name: str) -> ActionClassifier:
    if arch == ARCH_CONV:
        return ConvActionClassifier(channels, height, width, num_actions, width1, width2, seed, name)
    if arch == ARCH_LINEAR:
        return LinearActionClassifier(channels, height, width, num_actions, seed, name)
    raise ConfigException(f'Unknown action probe architecture {arch!r}', 'action_probe_arch')


def build_privacy_classifier(arch: str, channels: int, height: int, width: int, num_attributes: int,
                             width1: int, width2: int, hidden: int, seed: int, name: str) -> PrivacyClassifier:
    if arch == ARCH_CONV:
        return ConvPrivacyClassifier(channels, height, width, num_attributes, width1, width2, hidden, seed, name)
    if arch == ARCH_LINEAR:
        return LinearPrivacyClassifier(channels, height, width, num_attributes, seed, name)
    raise ConfigException(f'Unknown privacy probe architecture {arch!r}', 'privacy_probe_arch')


def anonymize(anonymizer: Anonymizer, frames: Tensor) -> Tensor:
    return anonymizer(frames)


def classify_action(classifier: ActionClassifier, clip: Tensor) -> Tensor:
    """ Logits of a single (T, C, H, W) clip or a (N, T, C, H, W) batch. """
    if clip.ndim == 4:
        if clip.shape[0] < 1:
            raise DomainException('classify_action', 'empty clip')
        return ops.reshape(classifier(ops.reshape(clip, (1,) + clip.shape)), (-1,))
    return classifier(clip)


def embed_privacy(encoder: BudgetEncoder, frame: Tensor) -> Tensor:
    """ Projection of a single (C, H, W) frame or a (N, C, H, W) batch. """
    if frame.ndim == 3:
        return ops.reshape(encoder(ops.reshape(frame, (1,) + frame.shape)), (-1,))
    return encoder(frame)


def parameter_groups(*networks: Optional[Network]) -> Dict[str, Parameters]:
    return {net.name: net.params for net in networks if net is not None}
