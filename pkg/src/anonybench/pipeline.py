"""
End-to-end pipeline: initialisation, anonymization training and the probe
protocols evaluated on the frozen anonymizer.
"""
import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .checkpoint import Checkpoint
from .config import PROTOCOL_KNOWN, PROTOCOL_NOVEL, PROTOCOL_RAW_PRETRAINED, PROTOCOLS, RunConfig, VARIANT_KNOWN, \
    VARIANT_NOVEL
from .exception import ConfigException
from .metrics import MetricsReport, evaluate_action_probe, evaluate_privacy_probe
from .nets import Anonymizer
from .synthdata import DatasetSplit, make_splits
from .trainer import (
    PHASE_ANONYMIZATION, CurveLog, Trainer, train_action_probe, train_anonymization, train_privacy_probe
)

logger = logging.getLogger(__name__)

PROBE_ACTION = 'action'
PROBE_PRIVACY = 'privacy'
PROBE_PRIVACY_RAW = 'privacy-raw-pretrained'
PROBE_KINDS = (PROBE_ACTION, PROBE_PRIVACY, PROBE_PRIVACY_RAW)


class SplitCache:
    """ Lazily generated (action, privacy) splits per generator variant. """
    def __init__(self, config: RunConfig, known: Optional[Tuple[DatasetSplit, DatasetSplit]] = None):
        self._config = config
        self._splits: Dict[str, Tuple[DatasetSplit, DatasetSplit]] = {}
        if known is not None:
            self._splits[VARIANT_KNOWN] = known

    def get(self, variant: str = VARIANT_KNOWN) -> Tuple[DatasetSplit, DatasetSplit]:
        if variant not in self._splits:
            data = dataclasses.replace(self._config.data, variant=variant)
            self._splits[variant] = make_splits(data, self._config.train.seed)
        return self._splits[variant]


@dataclass
class ProbeResult:
    report: MetricsReport
    curves: Dict[str, CurveLog] = field(default_factory=dict)


def _report(config: RunConfig, protocol: str) -> MetricsReport:
    train = config.train
    return MetricsReport(
        protocol=protocol,
        config_digest=config.digest(),
        limiter=train.limiter,
        lambda_penalty=train.lambda_penalty,
        mu=train.mu,
        tau=train.tau,
        seed=train.seed,
    )


def run_probes(
        config: RunConfig,
        anonymizer: Optional[Anonymizer],
        splits: SplitCache,
        protocol: str = PROTOCOL_KNOWN,
        kinds: Sequence[str] = (PROBE_ACTION, PROBE_PRIVACY)
) -> ProbeResult:
    """
    Trains the requested fresh probes and scores them.

    ``known`` and ``novel`` train and evaluate on anonymized data of the
    matching generator variant; ``raw-pretrained`` trains the privacy probe on
    raw frames and evaluates it on anonymized ones.
    """
    if protocol not in PROTOCOLS:
        raise ConfigException(f'Unknown protocol {protocol!r}', 'protocol')
    for kind in kinds:
        if kind not in PROBE_KINDS:
            raise ConfigException(f'Unknown probe kind {kind!r}', 'probe')
    action, privacy = splits.get(VARIANT_NOVEL if protocol == PROTOCOL_NOVEL else VARIANT_KNOWN)
    result = ProbeResult(_report(config, protocol))
    report = result.report
    if PROBE_ACTION in kinds:
        probe, result.curves['action_probe'] = train_action_probe(anonymizer, action, config)
        report.top1 = evaluate_action_probe(probe, anonymizer, action)
        report.n_eval = len(action.eval)
        logger.info('[%s] action probe top-1 %.4f', protocol, report.top1)
    if PROBE_PRIVACY in kinds or PROBE_PRIVACY_RAW in kinds:
        raw = PROBE_PRIVACY_RAW in kinds or protocol == PROTOCOL_RAW_PRETRAINED
        probe, result.curves['privacy_probe'] = train_privacy_probe(None if raw else anonymizer, privacy, config)
        report.ap, report.cmap, report.f1 = evaluate_privacy_probe(
            probe, anonymizer, privacy, config.train.f1_threshold
        )
        report.n_eval = max(report.n_eval, len(privacy.eval))
        logger.info('[%s] privacy probe cMAP %.4f, F1 %.4f', protocol, report.cmap, report.f1)
    return result


def protocol_for(kind: str, protocol: str) -> str:
    """ Protocol tag of a single-probe run. """
    return PROTOCOL_RAW_PRETRAINED if kind == PROBE_PRIVACY_RAW else protocol


@dataclass
class PipelineResult:
    trainer: Trainer
    checkpoint: Checkpoint
    reports: List[MetricsReport]
    curves: Dict[str, CurveLog]


def run_pipeline(
        config: RunConfig,
        splits: Optional[SplitCache] = None,
        initial: Optional[Checkpoint] = None,
        protocols: Sequence[str] = (PROTOCOL_KNOWN,),
        run_id: str = ''
) -> PipelineResult:
    """
    Pretraining (or ``initial``), anonymization training, then one report
    per protocol.
    """
    started = time.perf_counter()
    splits = splits or SplitCache(config)
    action, privacy = splits.get(VARIANT_KNOWN)
    trainer, checkpoint = train_anonymization(config, action, privacy, initial)
    curves = dict(trainer.curves)
    reports = []
    l_penalty_final = trainer.curve(PHASE_ANONYMIZATION).last('l_penalty')
    for protocol in protocols:
        kinds = (PROBE_PRIVACY_RAW,) if protocol == PROTOCOL_RAW_PRETRAINED else (PROBE_ACTION, PROBE_PRIVACY)
        result = run_probes(config, trainer.anonymizer, splits, protocol, kinds)
        result.report.run_id = run_id
        result.report.l_penalty_final = l_penalty_final
        reports.append(result.report)
        curves.update({f'{protocol}_{name}': curve for name, curve in result.curves.items()})
    wall = time.perf_counter() - started if config.train.wall_clock else 0.0
    for report in reports:
        report.wall_seconds = wall
    return PipelineResult(trainer, checkpoint, reports, curves)
