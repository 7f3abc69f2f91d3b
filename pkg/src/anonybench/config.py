"""
Run configuration.

Files are UTF-8 ``key = value`` lines; ``#`` starts a comment. Every key
names a field of :class:`DataConfig` or :class:`TrainConfig`; unknown keys
are errors. ``--set key=value`` overrides from the command line are applied
on top of the file.
"""
import dataclasses
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, get_type_hints

from .exception import ConfigException
from .nets import ANON_OUTPUTS, PROBE_ARCHS

OPTIMIZER_SGD = 'sgd'
OPTIMIZER_ADAM = 'adam'
OPTIMIZERS = (OPTIMIZER_SGD, OPTIMIZER_ADAM)

SCHEDULE_CONSTANT = 'constant'
SCHEDULE_WARMUP_STEP = 'warmup_step'
SCHEDULES = (SCHEDULE_CONSTANT, SCHEDULE_WARMUP_STEP)

PENALTY_PIXEL = 'pixel'
PENALTY_FEATURE = 'feature'
PENALTY_SPACES = (PENALTY_PIXEL, PENALTY_FEATURE)

MU_CAP = 'cap'
MU_NONE = 'none'
MU_MECHANISMS = (MU_CAP, MU_NONE)

VARIANT_KNOWN = 'known'
VARIANT_NOVEL = 'novel'
VARIANTS = (VARIANT_KNOWN, VARIANT_NOVEL)

PROTOCOL_KNOWN = 'known'
PROTOCOL_NOVEL = 'novel'
PROTOCOL_RAW_PRETRAINED = 'raw-pretrained'
PROTOCOLS = (PROTOCOL_KNOWN, PROTOCOL_NOVEL, PROTOCOL_RAW_PRETRAINED)

DEFAULT_LIMITER_GRID = [0.0, 0.3, 0.5, 0.7, 0.9, 1.0]
DEFAULT_LAMBDA_GRID = [0.0, 0.1, 0.3, 0.5, 0.7, 1.0]

_TRUE = ('true', '1', 'yes', 'on')
_FALSE = ('false', '0', 'no', 'off')


@dataclass(frozen=True)
class DataConfig:
    """ Synthetic generator parameters. """
    frames: int = 8
    channels: int = 3
    height: int = 16
    width: int = 16
    num_actions: int = 4
    num_attributes: int = 3
    noise: float = 0.05
    background: float = 0.1
    blob_level: float = 0.8
    hue_offset: float = 0.15
    glyph_level: float = 0.5
    n_action_train: int = 512
    n_action_eval: int = 128
    n_privacy_train: int = 512
    n_privacy_eval: int = 128
    variant: str = VARIANT_KNOWN
    crop_scale: float = 0.8
    flip_prob: float = 0.5
    jitter: float = 0.1
    erase_prob: float = 0.0

    def validate(self) -> None:
        _require(self.frames >= 1, 'frames', 'must be >= 1')
        _require(self.channels >= 1, 'channels', 'must be >= 1')
        _require(self.height % 4 == 0 and self.height >= 4, 'height', 'must be a positive multiple of 4')
        _require(self.width % 4 == 0 and self.width >= 4, 'width', 'must be a positive multiple of 4')
        _require(self.num_actions >= 1, 'num_actions', 'must be >= 1')
        _require(1 <= self.num_attributes <= 4, 'num_attributes', 'must be in [1, 4] (one glyph per corner)')
        _require(self.noise >= 0, 'noise', 'must be >= 0')
        _require(self.n_action_train >= 2 * self.num_actions, 'n_action_train', 'needs >= 2 clips per class')
        _require(self.n_action_eval >= 2 * self.num_actions, 'n_action_eval', 'needs >= 2 clips per class')
        _require(self.n_privacy_train >= 2, 'n_privacy_train', 'must be >= 2')
        _require(self.n_privacy_eval >= 2, 'n_privacy_eval', 'must be >= 2')
        _require(self.variant in VARIANTS, 'variant', f'must be one of {VARIANTS}')
        _require(0 < self.crop_scale <= 1, 'crop_scale', 'must be in (0, 1]')
        _require(0 <= self.flip_prob <= 1, 'flip_prob', 'must be in [0, 1]')
        _require(0 <= self.erase_prob <= 1, 'erase_prob', 'must be in [0, 1]')
        _require(self.jitter >= 0, 'jitter', 'must be >= 0')


@dataclass(frozen=True)
class TrainConfig:
    """ Training, evaluation and sweep parameters. """
    seed: int = 0
    limiter: float = 0.3
    lambda_penalty: float = 1.0
    mu: float = 1.0
    mu_mechanism: str = MU_CAP
    tau: float = 0.1
    penalty_space: str = PENALTY_PIXEL
    optimizer: str = OPTIMIZER_SGD
    lr_anonymizer: float = 1e-3
    lr_utility: float = 1e-3
    lr_budget: float = 1e-3
    lr_probe: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    pretrain_epochs: int = 50
    utility_pretrain_epochs: int = 5
    budget_pretrain_epochs: int = 0
    anon_epochs: int = 10
    action_epochs: int = 10
    privacy_epochs: int = 10
    batch_pretrain: int = 16
    batch_action: int = 8
    batch_privacy: int = 16
    batch_probe: int = 16
    skip: int = 4
    anon_output: str = 'sigmoid'
    anon_skip: bool = False
    anon_width1: int = 8
    anon_width2: int = 16
    enc_width1: int = 8
    enc_width2: int = 16
    hidden: int = 32
    projection_dim: int = 16
    action_probe_arch: str = 'conv'
    privacy_probe_arch: str = 'conv'
    probe_schedule: str = SCHEDULE_CONSTANT
    warmup_epochs: int = 2
    plateau_patience: int = 2
    plateau_tolerance: float = 1e-3
    f1_threshold: float = 0.5
    debug_checks: bool = False
    wall_clock: bool = False
    sweep_limiters: List[float] = field(default_factory=lambda: list(DEFAULT_LIMITER_GRID))
    sweep_lambdas: List[float] = field(default_factory=lambda: list(DEFAULT_LAMBDA_GRID))
    sweep_fixed_lambda: float = 1.0
    sweep_fixed_limiter: float = 0.3
    sweep_cross: bool = False
    sweep_protocols: List[str] = field(default_factory=lambda: [PROTOCOL_KNOWN])

    def validate(self, data: Optional[DataConfig] = None) -> None:
        _require(0.0 <= self.limiter <= 1.0, 'limiter', 'B must be in [0, 1]')
        _require(self.lambda_penalty >= 0, 'lambda_penalty', 'must be >= 0')
        _require(self.mu > 0, 'mu', 'must be > 0')
        _require(self.mu_mechanism in MU_MECHANISMS, 'mu_mechanism', f'must be one of {MU_MECHANISMS}')
        _require(self.tau > 0, 'tau', 'must be > 0')
        _require(self.penalty_space in PENALTY_SPACES, 'penalty_space', f'must be one of {PENALTY_SPACES}')
        _require(self.optimizer in OPTIMIZERS, 'optimizer', f'must be one of {OPTIMIZERS}')
        for key in ('lr_anonymizer', 'lr_utility', 'lr_budget', 'lr_probe'):
            _require(getattr(self, key) > 0, key, 'learning rates must be > 0')
        for key in ('pretrain_epochs', 'utility_pretrain_epochs', 'budget_pretrain_epochs',
                    'anon_epochs', 'action_epochs', 'privacy_epochs', 'warmup_epochs'):
            _require(getattr(self, key) >= 0, key, 'epoch counts must be >= 0')
        for key in ('batch_pretrain', 'batch_action', 'batch_privacy', 'batch_probe',
                    'anon_width1', 'anon_width2', 'enc_width1', 'enc_width2', 'hidden', 'projection_dim',
                    'plateau_patience'):
            _require(getattr(self, key) >= 1, key, 'must be >= 1')
        _require(self.skip >= 0, 'skip', 'must be >= 0')
        _require(self.anon_output in ANON_OUTPUTS, 'anon_output', f'must be one of {ANON_OUTPUTS}')
        _require(self.action_probe_arch in PROBE_ARCHS, 'action_probe_arch', f'must be one of {PROBE_ARCHS}')
        _require(self.privacy_probe_arch in PROBE_ARCHS, 'privacy_probe_arch', f'must be one of {PROBE_ARCHS}')
        _require(self.probe_schedule in SCHEDULES, 'probe_schedule', f'must be one of {SCHEDULES}')
        _require(0 < self.f1_threshold < 1, 'f1_threshold', 'must be in (0, 1)')
        _require(all(0 <= b <= 1 for b in self.sweep_limiters), 'sweep_limiters', 'B values must be in [0, 1]')
        _require(all(v >= 0 for v in self.sweep_lambdas), 'sweep_lambdas', 'lambda values must be >= 0')
        _require(all(p in PROTOCOLS for p in self.sweep_protocols), 'sweep_protocols', f'must be within {PROTOCOLS}')
        if data is not None:
            _require(self.skip < data.frames, 'skip', 'must be smaller than the clip length')


def _require(condition: bool, key: str, message: str) -> None:
    if not condition:
        raise ConfigException(f'Invalid value for {key}: {message}', key)


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> 'RunConfig':
        self.data.validate()
        self.train.validate(self.data)
        return self

    def replace(self, **changes: Any) -> 'RunConfig':
        """ Copy with the given flat keys changed (keys of either section). """
        data_changes, train_changes = _split_keys(changes)
        return RunConfig(
            dataclasses.replace(self.data, **data_changes),
            dataclasses.replace(self.train, **train_changes)
        )

    def as_dict(self) -> Dict[str, Any]:
        out = dataclasses.asdict(self.data)
        out.update(dataclasses.asdict(self.train))
        return out

    def render(self) -> str:
        """ Every key with its resolved value, in the file format, sorted by key. """
        lines = [f'{key} = {_render_value(value)}' for key, value in sorted(self.as_dict().items())]
        return '\n'.join(lines) + '\n'

    def digest(self) -> str:
        return hashlib.sha256(self.render().encode('utf-8')).hexdigest()


_DATA_KEYS = {f.name for f in fields(DataConfig)}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_HINTS: Dict[str, Any] = {**get_type_hints(DataConfig), **get_type_hints(TrainConfig)}


def known_keys() -> List[str]:
    return sorted(_DATA_KEYS | _TRAIN_KEYS)


def _split_keys(changes: Dict[str, Any]):
    data_changes: Dict[str, Any] = {}
    train_changes: Dict[str, Any] = {}
    for key, value in changes.items():
        if key in _DATA_KEYS:
            data_changes[key] = value
        elif key in _TRAIN_KEYS:
            train_changes[key] = value
        else:
            raise ConfigException(f'Unknown configuration key: {key}', key)
    return data_changes, train_changes


def _render_value(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (list, tuple)):
        return ', '.join(_render_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_value(key: str, text: str) -> Any:
    """ Converts the textual value of `key` to the type of its field. """
    if key not in _HINTS:
        raise ConfigException(f'Unknown configuration key: {key}', key)
    hint = _HINTS[key]
    text = text.strip()
    try:
        if hint is bool:
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(text)
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        if hint is str:
            return text
        if hint == List[float]:
            return [float(v) for v in text.split(',') if v.strip()]
        if hint == List[str]:
            return [v.strip() for v in text.split(',') if v.strip()]
    except ValueError:
        raise ConfigException(f'Malformed value for {key}: {text!r}', key) from None
    raise ConfigException(f'Unsupported type for {key}', key)


def parse_lines(lines: Sequence[str], source: str = '<config>') -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for number, raw in enumerate(lines, start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        key = key.strip()
        if not sep or not key:
            raise ConfigException(f'{source}:{number}: expected "key = value"', key or None)
        values[key] = parse_value(key, value)
    return values


def parse_overrides(overrides: Sequence[str]) -> Dict[str, Any]:
    return parse_lines(list(overrides), '--set')


def load_config(path: Optional[Path] = None, overrides: Sequence[str] = ()) -> RunConfig:
    """
    Reads a config file (optional) and applies ``key=value`` overrides.

    :param path: config file; None starts from the defaults
    :param overrides: ``key=value`` strings taking precedence over the file
    :return: validated configuration
    """
    values: Dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding='utf-8')
        except OSError as exc:
            raise ConfigException(f'Cannot read config file {path}: {exc.strerror}') from exc
        values.update(parse_lines(text.splitlines(), str(path)))
    values.update(parse_overrides(overrides))
    return RunConfig().replace(**values).validate()


def config_from_text(text: str) -> RunConfig:
    return RunConfig().replace(**parse_lines(text.splitlines())).validate()
