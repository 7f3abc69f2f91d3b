"""
Trend runs of the desk profile on the synthetic benchmark. Each takes minutes; run them
with ``pytest test/integration -m slow``.
"""
from pathlib import Path
from typing import Callable, Dict, Tuple

import numpy as np
import pytest

from anonybench import Anonymizer, Checkpoint, RunConfig, Trainer, load_config
from anonybench.metrics import evaluate_action_probe, evaluate_privacy_probe
from anonybench.nets import ARCH_CONV, ARCH_LINEAR
from anonybench.pipeline import PROBE_PRIVACY_RAW, SplitCache, run_probes
from anonybench.trainer import (
    PHASE_PRETRAIN, initialize, train_action_probe, train_anonymization, train_privacy_probe
)

pytestmark = pytest.mark.slow

DESK_PROFILE = Path(__file__).parents[2] / 'conf' / 'desk.conf'
LIMITERS = (0.3, 0.5, 0.7, 0.9)


@pytest.fixture(scope='module')
def config() -> RunConfig:
    return load_config(DESK_PROFILE)


@pytest.fixture(scope='module')
def splits(config: RunConfig) -> SplitCache:
    return SplitCache(config)


@pytest.fixture(scope='module')
def initial(config: RunConfig, splits: SplitCache) -> Checkpoint:
    return initialize(config, *splits.get()).checkpoint()


@pytest.fixture(scope='module')
def anonymizers(config: RunConfig, splits: SplitCache, initial: Checkpoint) -> Callable[[float, float], Anonymizer]:
    """ Trained anonymizer of a (limiter, lambda) cell; each cell trains once. """
    trained: Dict[Tuple[float, float], Anonymizer] = {}

    def get(limiter: float, weight: float) -> Anonymizer:
        if (limiter, weight) not in trained:
            cell = config.replace(limiter=limiter, lambda_penalty=weight).validate()
            trained[limiter, weight] = train_anonymization(cell, *splits.get(), initial=initial)[0].anonymizer
        return trained[limiter, weight]

    return get


@pytest.fixture(scope='module')
def raw_scores(config: RunConfig, splits: SplitCache) -> Tuple[float, float]:
    report = run_probes(config, None, splits).report
    return report.top1, report.cmap


def test_identity_pretraining(config: RunConfig, splits: SplitCache):
    trainer = Trainer(config, *splits.get())
    assert trainer.pretrain_anonymizer() < 0.05
    l1 = trainer.curve(PHASE_PRETRAIN).column('l1')
    assert len(l1) == config.train.pretrain_epochs
    assert all(later <= 1.05 * earlier for earlier, later in zip(l1, l1[1:]))


def test_limiter_trade_off(config, splits, anonymizers, raw_scores):
    raw_top1, raw_cmap = raw_scores
    top1, cmap = [], []
    for limiter in LIMITERS:
        report = run_probes(config, anonymizers(limiter, 1.0), splits).report
        top1.append(report.top1)
        cmap.append(report.cmap)

    assert top1[0] >= 0.8 * raw_top1
    assert all(later <= earlier + 0.03 for earlier, later in zip(top1, top1[1:]))
    assert all(value <= raw_cmap - 0.15 for value in cmap)
    assert max(cmap) - min(cmap) <= 0.10


def test_penalty_weight_ablation(config, splits, anonymizers):
    with_penalty = run_probes(config, anonymizers(0.3, 1.0), splits).report
    without = run_probes(config, anonymizers(0.3, 0.0), splits).report
    assert with_penalty.top1 >= without.top1 + 0.05
    assert abs(with_penalty.cmap - without.cmap) <= 0.05


def test_probe_architectures_agree(config, splits, anonymizers):
    anonymizer = anonymizers(0.3, 1.0)
    action, _ = splits.get()
    scores = []
    for arch in (ARCH_CONV, ARCH_LINEAR):
        probe, _ = train_action_probe(anonymizer, action, config, arch)
        scores.append(evaluate_action_probe(probe, anonymizer, action))
    assert abs(scores[0] - scores[1]) <= 0.15


def test_raw_pretrained_privacy_probe(config, splits, anonymizers):
    _, privacy = splits.get()
    probe, _ = train_privacy_probe(None, privacy, config)
    raw_cmap = evaluate_privacy_probe(probe, None, privacy, config.train.f1_threshold)[1]
    cmap = [
        run_probes(config, anonymizers(b, 1.0), splits, kinds=(PROBE_PRIVACY_RAW,)).report.cmap
        for b in LIMITERS
    ]
    assert max(cmap) - min(cmap) <= 0.05
    assert np.all(np.array(cmap) <= raw_cmap - 0.15)


def test_raw_calibration(raw_scores):
    raw_top1, raw_cmap = raw_scores
    assert raw_top1 >= 0.95
    assert raw_cmap >= 0.9


def test_linear_classifiers_decode_raw_data(config, splits):
    action, privacy = splits.get()
    classifier, _ = train_action_probe(None, action, config, ARCH_LINEAR)
    assert evaluate_action_probe(classifier, None, action) >= 0.9
    attributes, _ = train_privacy_probe(None, privacy, config, ARCH_LINEAR)
    ap, _, _ = evaluate_privacy_probe(attributes, None, privacy, config.train.f1_threshold)
    assert min(ap) >= 0.9


def test_step1_ascends_the_budget_loss(config, splits):
    cell = config.replace(lambda_penalty=0.0, mu_mechanism='none', optimizer='sgd').validate()
    trainer = Trainer(cell, *splits.get())

    def budget_loss(batch) -> float:
        with trainer.utility.params.frozen(), trainer.budget.params.frozen():
            return trainer.anonymizer_terms(batch, include_utility=False)[1].l_b.item()

    held, steps, epoch = 0, 0, 0
    while steps < 200:
        for batch in trainer.epoch_batches(epoch):
            before = budget_loss(batch)
            trainer.train_step1(batch, include_utility=False)
            held += budget_loss(batch) >= before
            steps += 1
            if steps == 200:
                break
        epoch += 1
    assert held >= 160
