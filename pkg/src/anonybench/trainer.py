"""
Two-step minimax anonymization training and fresh-probe retraining.

Initialisation pretrains the anonymizer towards the identity (L1
reconstruction) and optionally warms up the utility and budget branches on
clean data. Every anonymization iteration then draws one action batch and one
privacy batch and uses them for both steps:

  - step 1 updates the anonymizer on ``l_t - min(l_b, mu) + lambda * l_penalty``
    with the utility and budget branches frozen;
  - step 2 updates the utility branch on ``l_t`` and the budget branch on
    ``l_b`` with the anonymizer evaluated off the tape.

Epoch randomness is derived from ``(seed, phase, epoch)``, so a run resumed
from a checkpoint draws the same batches as an uninterrupted one.
"""
import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .checkpoint import Checkpoint
from .config import MU_CAP, PENALTY_FEATURE, RunConfig
from .exception import ConfigException, NumericalException, StepIsolationException
from .losses import LossTerms, binary_cross_entropy, compose, cross_entropy, l1_recon_loss, nt_xent, penalty_loss
from .nets import (
    ActionClassifier, Anonymizer, BudgetEncoder, ConvActionClassifier, Network, PrivacyClassifier,
    build_action_classifier, build_privacy_classifier
)
from .optim import Optimizer, build_optimizer, build_schedule
from .seeding import derive_seed, rng_for
from .synthdata import DatasetSplit, sample_pair_batch
from .tensor import Tape, Tensor, no_record

logger = logging.getLogger(__name__)

PHASE_PRETRAIN = 'pretrain'
PHASE_UTILITY_PRETRAIN = 'utility_pretrain'
PHASE_BUDGET_PRETRAIN = 'budget_pretrain'
PHASE_ANONYMIZATION = 'anonymization'
PHASE_ACTION_PROBE = 'action_probe'
PHASE_PRIVACY_PROBE = 'privacy_probe'

CURVE_COLUMNS: Dict[str, List[str]] = {
    PHASE_PRETRAIN: ['epoch', 'l1', 'wall'],
    PHASE_UTILITY_PRETRAIN: ['epoch', 'l_t', 'wall'],
    PHASE_BUDGET_PRETRAIN: ['epoch', 'l_b', 'wall'],
    PHASE_ANONYMIZATION: ['epoch', 'l_t', 'l_b', 'l_penalty', 'l_a', 'utility_loss', 'budget_loss', 'wall'],
    PHASE_ACTION_PROBE: ['epoch', 'loss', 'lr', 'wall'],
    PHASE_PRIVACY_PROBE: ['epoch', 'loss', 'lr', 'wall'],
}

EVAL_BATCH = 64


@dataclass
class CurveLog:
    """ Per-epoch training curve of one phase. """
    phase: str
    rows: List[List[float]] = field(default_factory=list)

    @property
    def columns(self) -> List[str]:
        return CURVE_COLUMNS[self.phase]

    def add(self, **values: float) -> None:
        self.rows.append([float(values[c]) for c in self.columns])

    def column(self, name: str) -> List[float]:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    def last(self, name: str) -> Optional[float]:
        values = self.column(name)
        return values[-1] if values else None

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([int(row[0])] + [repr(v) for v in row[1:]])
        return buffer.getvalue()

    def to_json(self) -> List[List[float]]:
        """ Rows as stored in checkpoints: the wall-clock column is zeroed. """
        wall = self.columns.index('wall')
        return [[0.0 if i == wall else v for i, v in enumerate(row)] for row in self.rows]


@dataclass
class Batch:
    """ Minibatch shared by both steps of one anonymization iteration. """
    clips: np.ndarray       # (N, T, C, H, W)
    y_t: np.ndarray         # (N,)
    view1: np.ndarray       # (M, C, H, W) first frames of the privacy pairs
    view2: np.ndarray       # (M, C, H, W)


@dataclass
class StepReport:
    l_t: float
    l_b: float
    l_penalty: float
    l_a: float


def _finite(stage: str, **values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise NumericalException(f'{name} is {value}', stage)


def batches(order: np.ndarray, size: int) -> List[np.ndarray]:
    return [order[i:i + size] for i in range(0, order.size, size)]


def _clock(enabled: bool) -> Callable[[], float]:
    if not enabled:
        return lambda: 0.0
    start = time.perf_counter()
    return lambda: time.perf_counter() - start


def _epochs(phase: str, start: int, stop: int) -> Iterable[int]:
    return tqdm(range(start, stop), desc=phase, disable=None, leave=False, initial=start, total=stop)


def _checksums(networks: Sequence[Network]) -> Dict[str, str]:
    return {net.name: net.params.digest() for net in networks}


def _assert_unchanged(step: str, before: Dict[str, str], networks: Sequence[Network]) -> None:
    for net in networks:
        if net.params.digest() != before[net.name]:
            raise StepIsolationException(f'{step} changed the parameters of {net.name}', net.name)
    logger.debug('%s left %s untouched', step, ', '.join(before))


def anonymize_array(anonymizer: Optional[Anonymizer], inputs: np.ndarray) -> np.ndarray:
    """
    Evaluates the frozen anonymizer over stacked frames or clips, off the tape.
    ``None`` stands for the identity bypass.
    """
    if anonymizer is None:
        return inputs
    out = []
    with no_record():
        for start in range(0, inputs.shape[0], EVAL_BATCH):
            chunk = Tensor.wrap(inputs[start:start + EVAL_BATCH])
            if chunk.ndim == 5:
                out.append(anonymizer.anonymize_clips(chunk).numpy())
            else:
                out.append(anonymizer(chunk).numpy())
    return np.concatenate(out, axis=0)


class Trainer:
    """
    Owns the anonymizer, the utility and budget branches, their optimizers
    and the training curves of one run.
    """
    def __init__(self, config: RunConfig, action: DatasetSplit, privacy: DatasetSplit):
        self._config = config
        self._action = action
        self._privacy = privacy
        data, train = config.data, config.train
        self.anonymizer = Anonymizer(
            data.channels, train.anon_width1, train.anon_width2, train.anon_skip, train.anon_output, seed=train.seed
        )
        self.utility = ConvActionClassifier(
            data.channels, data.height, data.width, data.num_actions,
            train.enc_width1, train.enc_width2, seed=train.seed
        )
        self.budget = BudgetEncoder(
            data.channels, data.height, data.width, train.enc_width1, train.enc_width2,
            train.hidden, train.projection_dim, seed=train.seed
        )
        self.optimizers: Dict[str, Optimizer] = {
            'anonymizer': build_optimizer(train, self.anonymizer.params, train.lr_anonymizer),
            'utility': build_optimizer(train, self.utility.params, train.lr_utility),
            'budget': build_optimizer(train, self.budget.params, train.lr_budget),
        }
        self.curves: Dict[str, CurveLog] = {}
        self.completed: Dict[str, int] = {}
        self.held_out_mae: Optional[float] = None

    @property
    def config(self) -> RunConfig:
        return self._config

    @property
    def networks(self) -> List[Network]:
        return [self.anonymizer, self.utility, self.budget]

    def curve(self, phase: str) -> CurveLog:
        return self.curves.setdefault(phase, CurveLog(phase))

    def _epoch_rng(self, phase: str, epoch: int) -> np.random.Generator:
        return rng_for(self._config.train.seed, phase, epoch)

    def _mu(self) -> float:
        train = self._config.train
        return train.mu if train.mu_mechanism == MU_CAP else math.inf

    # Initialisation

    def pretrain_anonymizer(self, epochs: Optional[int] = None) -> float:
        """
        Fits the anonymizer to the identity with the L1 reconstruction loss.
        Each epoch visits every training clip once through one random frame.

        :return: held-out mean absolute error over all eval frames
        """
        train = self._config.train
        epochs = train.pretrain_epochs if epochs is None else epochs
        clips = self._action.inputs('train')
        n, t = clips.shape[:2]
        curve = self.curve(PHASE_PRETRAIN)
        clock = _clock(train.wall_clock)
        optimizer = self.optimizers['anonymizer']
        for epoch in _epochs(PHASE_PRETRAIN, self.completed.get(PHASE_PRETRAIN, 0), epochs):
            rng = self._epoch_rng(PHASE_PRETRAIN, epoch)
            order = rng.permutation(n)
            picks = rng.integers(0, t, size=n)
            losses = []
            for idx in batches(order, train.batch_pretrain):
                x = Tensor.wrap(clips[idx, picks[idx]])
                self.anonymizer.params.zero_grad()
                with Tape() as tape:
                    loss = l1_recon_loss(x, self.anonymizer(x))
                    _finite(PHASE_PRETRAIN, l1=loss.item())
                    tape.backward(loss)
                optimizer.step()
                losses.append(loss.item())
            curve.add(epoch=epoch, l1=float(np.mean(losses)), wall=clock())
            self.completed[PHASE_PRETRAIN] = epoch + 1
            logger.debug('Pretrain epoch %d: L1 %.5f', epoch, curve.last('l1'))
        self.held_out_mae = self.evaluate_reconstruction()
        logger.info('Anonymizer pretraining finished after %d epochs, held-out MAE %.4f', epochs, self.held_out_mae)
        return self.held_out_mae

    def evaluate_reconstruction(self) -> float:
        clips = self._action.inputs('eval')
        frames = clips.reshape((-1,) + clips.shape[2:])
        return float(np.mean(np.abs(frames - anonymize_array(self.anonymizer, frames))))

    def pretrain_utility(self, epochs: Optional[int] = None) -> None:
        """ Supervised warm-up of the utility branch on clean clips. """
        train = self._config.train
        epochs = train.utility_pretrain_epochs if epochs is None else epochs
        clips = self._action.inputs('train')
        labels = self._action.action_labels('train')
        curve = self.curve(PHASE_UTILITY_PRETRAIN)
        clock = _clock(train.wall_clock)
        for epoch in _epochs(PHASE_UTILITY_PRETRAIN, self.completed.get(PHASE_UTILITY_PRETRAIN, 0), epochs):
            order = self._epoch_rng(PHASE_UTILITY_PRETRAIN, epoch).permutation(clips.shape[0])
            losses = []
            for idx in batches(order, train.batch_action):
                self.utility.params.zero_grad()
                with Tape() as tape:
                    loss = cross_entropy(self.utility(Tensor.wrap(clips[idx])), labels[idx])
                    _finite(PHASE_UTILITY_PRETRAIN, l_t=loss.item())
                    tape.backward(loss)
                self.optimizers['utility'].step()
                losses.append(loss.item())
            curve.add(epoch=epoch, l_t=float(np.mean(losses)), wall=clock())
            self.completed[PHASE_UTILITY_PRETRAIN] = epoch + 1
        if epochs:
            logger.info('Utility branch warmed up for %d epochs, final loss %.4f', epochs, curve.last('l_t'))

    def pretrain_budget(self, epochs: Optional[int] = None) -> None:
        """ Contrastive warm-up of the budget branch on clean privacy pairs. """
        train = self._config.train
        epochs = train.budget_pretrain_epochs if epochs is None else epochs
        curve = self.curve(PHASE_BUDGET_PRETRAIN)
        clock = _clock(train.wall_clock)
        samples = self._privacy.train
        for epoch in _epochs(PHASE_BUDGET_PRETRAIN, self.completed.get(PHASE_BUDGET_PRETRAIN, 0), epochs):
            rng = self._epoch_rng(PHASE_BUDGET_PRETRAIN, epoch)
            order = rng.permutation(len(samples))
            losses = []
            for idx in batches(order, train.batch_privacy):
                view1, view2 = sample_pair_batch([samples[i] for i in idx], train.skip, rng, self._config.data)
                self.budget.params.zero_grad()
                with Tape() as tape:
                    loss = nt_xent(self.budget(Tensor.wrap(view1)), self.budget(Tensor.wrap(view2)), train.tau)
                    _finite(PHASE_BUDGET_PRETRAIN, l_b=loss.item())
                    tape.backward(loss)
                self.optimizers['budget'].step()
                losses.append(loss.item())
            curve.add(epoch=epoch, l_b=float(np.mean(losses)), wall=clock())
            self.completed[PHASE_BUDGET_PRETRAIN] = epoch + 1
        if epochs:
            logger.info('Budget branch warmed up for %d epochs, final loss %.4f', epochs, curve.last('l_b'))

    # Anonymization training

    def epoch_batches(self, epoch: int) -> Iterable[Batch]:
        """
        Batches of one anonymization epoch: the action split is visited once
        in shuffled order, the privacy split is cycled alongside it.
        """
        train = self._config.train
        rng = self._epoch_rng(PHASE_ANONYMIZATION, epoch)
        clips = self._action.inputs('train')
        labels = self._action.action_labels('train')
        samples = self._privacy.train
        action_order = rng.permutation(clips.shape[0])
        privacy_order = rng.permutation(len(samples))
        for b, idx in enumerate(batches(action_order, train.batch_action)):
            positions = (b * train.batch_privacy + np.arange(train.batch_privacy)) % len(samples)
            picked = [samples[i] for i in privacy_order[positions]]
            view1, view2 = sample_pair_batch(picked, train.skip, rng, self._config.data)
            yield Batch(clips[idx], labels[idx], view1, view2)

    def _penalty(self, clips: Tensor, anonymized: Tensor) -> Tensor:
        train = self._config.train
        if train.penalty_space == PENALTY_FEATURE:
            raw = self.utility.features(clips)
            return penalty_loss(raw, self.utility.features(anonymized), train.limiter)
        return penalty_loss(clips, anonymized, train.limiter)

    def anonymizer_terms(
            self, batch: Batch, include_utility: bool = True
    ) -> Tuple[Tape, LossTerms, Tuple[Tensor, Tensor]]:
        """
        Records the anonymizer objective for one batch on a fresh tape. The
        caller must hold the branches frozen.
        """
        train = self._config.train
        with Tape() as tape:
            clips = Tensor.wrap(batch.clips)
            anonymized = self.anonymizer.anonymize_clips(clips)
            l_t = cross_entropy(self.utility(anonymized), batch.y_t)
            if not include_utility:
                l_t = l_t.detach()
            view1, view2 = Tensor.wrap(batch.view1), Tensor.wrap(batch.view2)
            z1 = self.budget(self.anonymizer(view1))
            z2 = self.budget(self.anonymizer(view2))
            l_b = nt_xent(z1, z2, train.tau)
            l_penalty = self._penalty(clips, anonymized)
            terms = compose(l_t, l_b, l_penalty, train.lambda_penalty, self._mu())
        return tape, terms, (view1, view2)

    def train_step1(self, batch: Batch, include_utility: bool = True) -> StepReport:
        """
        One descent step of the anonymizer with the utility and budget
        branches frozen. The penalty only sees the action batch.
        """
        train = self._config.train
        frozen = [self.utility, self.budget]
        before = _checksums(frozen) if train.debug_checks else None
        self.anonymizer.params.zero_grad()
        with self.utility.params.frozen(), self.budget.params.frozen():
            tape, terms, views = self.anonymizer_terms(batch, include_utility)
            values = terms.values()
            _finite('step1', **values)
            if train.debug_checks and any(tape.depends_on(terms.l_penalty, v) for v in views):
                raise StepIsolationException('privacy batch reached the penalty term', self.anonymizer.name)
            tape.backward(terms.l_a)
        self.optimizers['anonymizer'].step()
        if before is not None:
            _assert_unchanged('step1', before, frozen)
        return StepReport(**values)

    def train_step2(self, batch: Batch) -> Tuple[float, float]:
        """
        One descent step of the utility branch on ``l_t`` and of the budget
        branch on ``l_b``, both on anonymizer output computed off the tape.

        :return: (utility loss, budget loss) before the update
        """
        train = self._config.train
        before = _checksums([self.anonymizer]) if train.debug_checks else None
        anonymized = Tensor.wrap(anonymize_array(self.anonymizer, batch.clips))
        view1 = Tensor.wrap(anonymize_array(self.anonymizer, batch.view1))
        view2 = Tensor.wrap(anonymize_array(self.anonymizer, batch.view2))
        self.utility.params.zero_grad()
        self.budget.params.zero_grad()
        with Tape() as tape:
            l_t = cross_entropy(self.utility(anonymized), batch.y_t)
            l_b = nt_xent(self.budget(view1), self.budget(view2), train.tau)
            _finite('step2', l_t=l_t.item(), l_b=l_b.item())
            tape.backward(l_t + l_b)
        self.optimizers['utility'].step()
        self.optimizers['budget'].step()
        if before is not None:
            _assert_unchanged('step2', before, [self.anonymizer])
        return l_t.item(), l_b.item()

    def train_anonymization(self, epochs: Optional[int] = None) -> CurveLog:
        """
        Alternates step 1 and step 2 over every batch pairing until ``epochs``
        epochs are complete, counting the ones a restored checkpoint already did.
        """
        train = self._config.train
        epochs = train.anon_epochs if epochs is None else epochs
        curve = self.curve(PHASE_ANONYMIZATION)
        clock = _clock(train.wall_clock)
        for epoch in _epochs(PHASE_ANONYMIZATION, self.completed.get(PHASE_ANONYMIZATION, 0), epochs):
            step1: List[StepReport] = []
            step2: List[Tuple[float, float]] = []
            for batch in self.epoch_batches(epoch):
                step1.append(self.train_step1(batch))
                step2.append(self.train_step2(batch))
                logger.debug('Epoch %d step %d: %s', epoch, len(step1), step1[-1])
            curve.add(
                epoch=epoch,
                l_t=np.mean([r.l_t for r in step1]),
                l_b=np.mean([r.l_b for r in step1]),
                l_penalty=np.mean([r.l_penalty for r in step1]),
                l_a=np.mean([r.l_a for r in step1]),
                utility_loss=np.mean([u for u, _ in step2]),
                budget_loss=np.mean([b for _, b in step2]),
                wall=clock(),
            )
            self.completed[PHASE_ANONYMIZATION] = epoch + 1
            logger.info(
                'Anonymization epoch %d: l_t %.4f, l_b %.4f, l_penalty %.4f, l_a %.4f',
                epoch, curve.last('l_t'), curve.last('l_b'), curve.last('l_penalty'), curve.last('l_a')
            )
        return curve

    # Checkpoints

    def checkpoint(self, metrics: Optional[dict] = None) -> Checkpoint:
        optimizer_state = {}
        for net, optimizer in self.optimizers.items():
            optimizer_state.update({f'{net}/{k}': v for k, v in optimizer.state().items()})
        return Checkpoint(
            networks={net.name: net.params.state() for net in self.networks},
            optimizer=optimizer_state,
            epoch=self.completed.get(PHASE_ANONYMIZATION, 0),
            config_digest=self._config.digest(),
            metrics=dict(metrics or {}, held_out_mae=self.held_out_mae),
            meta={
                'completed': dict(self.completed),
                'curves': {phase: curve.to_json() for phase, curve in self.curves.items()},
            }
        )

    def restore(self, checkpoint: Checkpoint, networks_only: bool = False) -> None:
        """
        Loads parameters, and unless ``networks_only`` also optimizer state,
        epoch counters and curves, so training continues where it stopped.
        """
        for net in self.networks:
            if net.name not in checkpoint.networks:
                raise ConfigException(f'Checkpoint has no parameters for {net.name}', net.name)
            net.params.load_state(checkpoint.networks[net.name])
        if networks_only:
            return
        for net, optimizer in self.optimizers.items():
            prefix = f'{net}/'
            optimizer.load_state({k[len(prefix):]: v for k, v in checkpoint.optimizer.items() if k.startswith(prefix)})
        self.completed = {k: int(v) for k, v in checkpoint.meta.get('completed', {}).items()}
        self.curves = {
            phase: CurveLog(phase, [list(row) for row in rows])
            for phase, rows in checkpoint.meta.get('curves', {}).items()
        }
        self.held_out_mae = checkpoint.metrics.get('held_out_mae')


def _probe_seed(seed: int, kind: str) -> int:
    return derive_seed(seed, 'probe', kind)


def train_probe(
        phase: str,
        network: Network,
        inputs: np.ndarray,
        loss_fn: Callable[[Tensor, np.ndarray], Tensor],
        targets: np.ndarray,
        config: RunConfig,
        epochs: int
) -> CurveLog:
    train = config.train
    optimizer = build_optimizer(train, network.params, train.lr_probe)
    schedule = build_schedule(train, train.lr_probe)
    curve = CurveLog(phase)
    clock = _clock(train.wall_clock)
    for epoch in _epochs(phase, 0, epochs):
        optimizer.lr = schedule.rate(epoch)
        order = rng_for(train.seed, phase, epoch).permutation(inputs.shape[0])
        losses = []
        for idx in batches(order, train.batch_probe):
            network.params.zero_grad()
            with Tape() as tape:
                loss = loss_fn(network(Tensor.wrap(inputs[idx])), targets[idx])
                _finite(phase, loss=loss.item())
                tape.backward(loss)
            optimizer.step()
            losses.append(loss.item())
        epoch_loss = float(np.mean(losses))
        curve.add(epoch=epoch, loss=epoch_loss, lr=optimizer.lr, wall=clock())
        schedule.observe(epoch_loss)
    return curve


def train_action_probe(
        anonymizer: Optional[Anonymizer],
        action: DatasetSplit,
        config: RunConfig,
        arch: Optional[str] = None
) -> Tuple[ActionClassifier, CurveLog]:
    """
    Trains a fresh action classifier on anonymized training clips. The
    anonymizer is only evaluated, its parameters never change.

    :param anonymizer: frozen anonymizer, None for raw clips
    :param arch: probe architecture, defaults to ``action_probe_arch``
    """
    data, train = config.data, config.train
    arch = arch or train.action_probe_arch
    probe = build_action_classifier(
        arch, data.channels, data.height, data.width, data.num_actions,
        train.enc_width1, train.enc_width2, _probe_seed(train.seed, 'action'), 'action_probe'
    )
    inputs = anonymize_array(anonymizer, action.inputs('train'))
    curve = train_probe(
        PHASE_ACTION_PROBE, probe, inputs, cross_entropy, action.action_labels('train'), config, train.action_epochs
    )
    logger.info('Action probe (%s) trained for %d epochs', arch, train.action_epochs)
    return probe, curve


def train_privacy_probe(
        anonymizer: Optional[Anonymizer],
        privacy: DatasetSplit,
        config: RunConfig,
        arch: Optional[str] = None
) -> Tuple[PrivacyClassifier, CurveLog]:
    """
    Trains a fresh multi-label attribute classifier with per-attribute binary
    cross-entropy on anonymized training frames. With ``anonymizer=None``
    the probe learns from raw frames, which is the raw-pretrained protocol.
    """
    data, train = config.data, config.train
    arch = arch or train.privacy_probe_arch
    probe = build_privacy_classifier(
        arch, data.channels, data.height, data.width, data.num_attributes,
        train.enc_width1, train.enc_width2, train.hidden, _probe_seed(train.seed, 'privacy'), 'privacy_probe'
    )
    inputs = anonymize_array(anonymizer, privacy.inputs('train'))
    curve = train_probe(
        PHASE_PRIVACY_PROBE, probe, inputs, binary_cross_entropy, privacy.privacy_labels('train'), config,
        train.privacy_epochs
    )
    logger.info('Privacy probe (%s) trained for %d epochs', arch, train.privacy_epochs)
    return probe, curve


def pretrain_anonymizer(trainer: Trainer, epochs: Optional[int] = None) -> float:
    return trainer.pretrain_anonymizer(epochs)


def train_step1(trainer: Trainer, batch: Batch) -> StepReport:
    return trainer.train_step1(batch)


def train_step2(trainer: Trainer, batch: Batch) -> Tuple[float, float]:
    return trainer.train_step2(batch)


def initialize(config: RunConfig, action: DatasetSplit, privacy: DatasetSplit) -> Trainer:
    """ Builds a trainer and runs every initialisation phase. """
    trainer = Trainer(config, action, privacy)
    trainer.pretrain_anonymizer()
    trainer.pretrain_utility()
    trainer.pretrain_budget()
    return trainer


def train_anonymization(config: RunConfig, action: DatasetSplit, privacy: DatasetSplit,
                        initial: Optional[Checkpoint] = None) -> Tuple[Trainer, Checkpoint]:
    """
    Full anonymization training. ``initial`` continues from a checkpoint;
    without it every initialisation phase runs first.
    """
    if initial is None:
        trainer = initialize(config, action, privacy)
    else:
        trainer = Trainer(config, action, privacy)
        trainer.restore(initial)
    trainer.train_anonymization()
    return trainer, trainer.checkpoint()


def rms_distortion(anonymizer: Anonymizer, inputs: np.ndarray) -> float:
    """ Mean over samples of the RMS difference between input and anonymizer output. """
    out = anonymize_array(anonymizer, inputs)
    diff = (inputs - out).reshape(inputs.shape[0], -1)
    return float(np.mean(np.sqrt(np.mean(diff ** 2, axis=1))))


