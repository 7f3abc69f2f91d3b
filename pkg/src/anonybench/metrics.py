"""
Evaluation metrics: top-1 accuracy for the utility task, per-attribute
average precision, class-wise mean AP and macro F1 for privacy leakage.

Conventions:
  - top-1 ties go to the lowest class index;
  - AP ranks by descending score, ties kept in input order;
  - attributes without positives have no AP and are left out of cMAP;
  - F1 counts ``score >= threshold`` as positive, and 0/0 precision or recall as 0.
"""
import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exception import DomainException, ShapeException
from .nets import ActionClassifier, Anonymizer, Network, PrivacyClassifier
from .synthdata import DatasetSplit
from .tensor import Tensor, no_record
from .trainer import EVAL_BATCH, anonymize_array

logger = logging.getLogger(__name__)

DEFAULT_F1_THRESHOLD = 0.5


def top1(logits: np.ndarray, labels: np.ndarray) -> float:
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise DomainException('top1', f'expected a non-empty (N, K) batch, got {logits.shape}')
    if labels.shape != (logits.shape[0],):
        raise ShapeException('top1', logits.shape, labels.shape)
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def average_precision(scores: np.ndarray, labels: np.ndarray) -> Optional[float]:
    """
    Mean of the precision at the rank of every positive.

    :return: AP, or None when there is no positive
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ShapeException('average_precision', scores.shape, labels.shape)
    positives = int(np.sum(labels == 1))
    if positives == 0:
        return None
    order = np.argsort(-scores, kind='stable')
    hits = (labels[order] == 1).astype(np.float64)
    precision = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(np.sum(precision * hits) / positives)


def per_attribute_ap(scores: np.ndarray, labels: np.ndarray) -> List[Optional[float]]:
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 2:
        raise ShapeException('cmap', scores.shape, labels.shape)
    out = []
    for k in range(scores.shape[1]):
        ap = average_precision(scores[:, k], labels[:, k])
        if ap is None:
            logger.warning('Attribute %d has no positive sample; excluded from cMAP', k)
        out.append(ap)
    return out


def mean_of_defined(aps: Sequence[Optional[float]]) -> float:
    defined = [ap for ap in aps if ap is not None]
    if not defined:
        raise DomainException('cmap', 'no attribute has a positive sample')
    return float(np.mean(defined))


def cmap(scores: np.ndarray, labels: np.ndarray) -> float:
    """ Class-wise mean average precision over (N, K) scores and multi-hot labels. """
    return mean_of_defined(per_attribute_ap(scores, labels))


def macro_f1(scores: np.ndarray, labels: np.ndarray, threshold: float = DEFAULT_F1_THRESHOLD) -> float:
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 2:
        raise ShapeException('macro_f1', scores.shape, labels.shape)
    predicted = scores >= threshold
    actual = labels == 1
    f1s = []
    for k in range(scores.shape[1]):
        tp = float(np.sum(predicted[:, k] & actual[:, k]))
        fp = float(np.sum(predicted[:, k] & ~actual[:, k]))
        fn = float(np.sum(~predicted[:, k] & actual[:, k]))
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1s.append(2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0)
    return float(np.mean(f1s))


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


BASE_COLUMNS = ['run_id', 'protocol', 'B', 'lambda', 'mu', 'tau', 'seed', 'top1', 'cmap', 'f1']
TAIL_COLUMNS = ['l_penalty_final', 'wall_seconds', 'status']


def csv_columns(num_attributes: int) -> List[str]:
    return BASE_COLUMNS + [f'ap_attr_{k}' for k in range(num_attributes)] + TAIL_COLUMNS


@dataclass
class MetricsReport:
    """ Metrics of one (anonymizer, probe pair, protocol) evaluation. """
    protocol: str
    top1: Optional[float] = None
    ap: List[Optional[float]] = field(default_factory=list)
    cmap: Optional[float] = None
    f1: Optional[float] = None
    n_eval: int = 0
    config_digest: str = ''
    run_id: str = ''
    limiter: float = 0.0
    lambda_penalty: float = 0.0
    mu: float = 0.0
    tau: float = 0.0
    seed: int = 0
    l_penalty_final: Optional[float] = None
    wall_seconds: float = 0.0
    status: str = 'ok'

    def to_row(self, num_attributes: Optional[int] = None) -> Dict[str, str]:
        k = len(self.ap) if num_attributes is None else num_attributes
        row = {
            'run_id': self.run_id,
            'protocol': self.protocol,
            'B': _fmt(self.limiter),
            'lambda': _fmt(self.lambda_penalty),
            'mu': _fmt(self.mu),
            'tau': _fmt(self.tau),
            'seed': str(self.seed),
            'top1': _fmt(self.top1),
            'cmap': _fmt(self.cmap),
            'f1': _fmt(self.f1),
            'l_penalty_final': _fmt(self.l_penalty_final),
            'wall_seconds': _fmt(self.wall_seconds),
            'status': self.status,
        }
        for i in range(k):
            row[f'ap_attr_{i}'] = _fmt(self.ap[i] if i < len(self.ap) else None)
        return row

    def to_json(self) -> dict:
        return {
            'protocol': self.protocol, 'top1': self.top1, 'ap': self.ap, 'cmap': self.cmap, 'f1': self.f1,
            'n_eval': self.n_eval, 'config_digest': self.config_digest, 'run_id': self.run_id,
            'B': self.limiter, 'lambda': self.lambda_penalty, 'mu': self.mu, 'tau': self.tau, 'seed': self.seed,
            'l_penalty_final': self.l_penalty_final, 'wall_seconds': self.wall_seconds, 'status': self.status,
        }


def _fmt(value: Optional[float]) -> str:
    return '' if value is None else repr(float(value))


def render_csv(reports: Sequence[MetricsReport], num_attributes: int) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=csv_columns(num_attributes), lineterminator='\n')
    writer.writeheader()
    for report in reports:
        writer.writerow(report.to_row(num_attributes))
    return buffer.getvalue()


def read_csv_rows(text: str) -> List[Dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))


def _logits(network: Network, inputs: np.ndarray) -> np.ndarray:
    out = []
    with no_record():
        for start in range(0, inputs.shape[0], EVAL_BATCH):
            out.append(network(Tensor.wrap(inputs[start:start + EVAL_BATCH])).numpy())
    return np.concatenate(out, axis=0)


def evaluate_action_probe(probe: ActionClassifier, anonymizer: Optional[Anonymizer], action: DatasetSplit) -> float:
    """ Top-1 of the probe on the anonymized eval clips. """
    inputs = anonymize_array(anonymizer, action.inputs('eval'))
    return top1(_logits(probe, inputs), action.action_labels('eval'))


def evaluate_privacy_probe(
        probe: PrivacyClassifier,
        anonymizer: Optional[Anonymizer],
        privacy: DatasetSplit,
        threshold: float = DEFAULT_F1_THRESHOLD
) -> Tuple[List[Optional[float]], float, float]:
    """
    Per-attribute AP, cMAP and macro F1 of the probe on the anonymized eval
    frames. Scores are the sigmoid of the probe logits.
    """
    inputs = anonymize_array(anonymizer, privacy.inputs('eval'))
    scores = sigmoid(_logits(probe, inputs))
    labels = privacy.privacy_labels('eval')
    aps = per_attribute_ap(scores, labels)
    return aps, mean_of_defined(aps), macro_f1(scores, labels, threshold)
