from dataclasses import dataclass

import numpy as np

from . import ops
from .exception import DomainException, ShapeException
from .tensor import Tensor


@dataclass
class LossTerms:
    """
    Terms of the anonymizer objective, each kept as its differentiable scalar.

    ``l_a = l_t - min(l_b, mu) + lambda_penalty * l_penalty``
    """
    l_t: Tensor
    l_b: Tensor
    l_penalty: Tensor
    l_a: Tensor

    def values(self) -> dict:
        return {
            'l_t': self.l_t.item(),
            'l_b': self.l_b.item(),
            'l_penalty': self.l_penalty.item(),
            'l_a': self.l_a.item(),
        }


def _one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _check_labels(kind: str, labels: np.ndarray, k: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
        raise DomainException(kind, f'labels must be a 1-D integer array, got {labels.dtype} {labels.shape}')
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DomainException(kind, f'label out of range [0, {k})')
    return labels


def log_softmax(logits: Tensor) -> Tensor:
    """ Row-wise log-softmax with the row maximum subtracted as a constant. """
    shift = Tensor.wrap(np.broadcast_to(logits.data.max(axis=1, keepdims=True), logits.shape).copy())
    z = ops.subtract(logits, shift)
    lse = ops.log(ops.sum(ops.exp(z), axis=1, keepdims=True))
    return ops.subtract(z, ops.broadcast_to(lse, logits.shape))


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """
    Mean over the batch of ``-log softmax(logits)[label]``.

    :param logits: (N, K)
    :param labels: N class ids in [0, K)
    """
    if logits.ndim != 2:
        raise ShapeException('cross_entropy', logits.shape)
    labels = _check_labels('cross_entropy', labels, logits.shape[1])
    if labels.size != logits.shape[0]:
        raise ShapeException('cross_entropy', logits.shape, labels.shape)
    picked = ops.sum(ops.multiply(log_softmax(logits), Tensor.wrap(_one_hot(labels, logits.shape[1]))), axis=1)
    return ops.neg(ops.mean(picked))


def binary_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """
    Per-attribute sigmoid + binary cross-entropy, averaged over samples and
    attributes. Uses ``softplus(x) - x*y`` with
    ``softplus(x) = max(x, 0) + log(1 + exp(-|x|))``.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if logits.shape != targets.shape:
        raise ShapeException('binary_cross_entropy', logits.shape, targets.shape)
    softplus = ops.add(ops.relu(logits), ops.log(ops.add_scalar(ops.exp(ops.neg(ops.abs(logits))), 1.0)))
    return ops.mean(ops.subtract(softplus, ops.multiply(logits, Tensor.wrap(targets))))


def rms_diff(x: Tensor, y: Tensor) -> Tensor:
    """ sqrt(mean((x - y)^2)) over all elements. """
    if x.shape != y.shape:
        raise ShapeException('rms_diff', x.shape, y.shape)
    return ops.sqrt(ops.mean(ops.square(ops.subtract(x, y))))


def penalty_loss(x: Tensor, anonymized: Tensor, limiter: float) -> Tensor:
    """
    Hinge penalty ``max(0, rms(x - f_A(x)) - B)``: zero, with zero gradient,
    while the distortion stays within the limiter B.
    """
    if limiter < 0:
        raise DomainException('penalty_loss', f'limiter B must be non-negative, got {limiter}')
    return ops.maximum(ops.add_scalar(rms_diff(x, anonymized), -float(limiter)), 0.0)


def nt_xent(z1: Tensor, z2: Tensor, temperature: float = 0.1) -> Tensor:
    """
    Normalised-temperature cross-entropy over N positive pairs (z1[i], z2[i]).

    For each of the 2N anchors the positive is the other view of the same
    sample and the denominator runs over every other projection of the batch
    (both views, the anchor itself excluded). ``h(u, v) = exp(cos(u, v) / tau)``.
    The result is the mean over all 2N anchors.
    """
    if z1.ndim != 2 or z1.shape != z2.shape:
        raise ShapeException('nt_xent', z1.shape, z2.shape)
    if temperature <= 0:
        raise DomainException('nt_xent', f'temperature must be positive, got {temperature}')
    n = z1.shape[0]
    if n < 1:
        raise ShapeException('nt_xent', z1.shape)

    inv_tau = 1.0 / temperature
    u = ops.l2_normalize(ops.concat([z1, z2], axis=0))
    sim = ops.scale(ops.matmul(u, ops.transpose(u)), inv_tau)

    others = 1.0 - np.eye(2 * n)
    positives = np.zeros((2 * n, 2 * n))
    idx = np.arange(n)
    positives[idx, idx + n] = 1.0
    positives[idx + n, idx] = 1.0

    # cosine <= 1, so shifting by 1/tau keeps every exponent <= 0
    e = ops.exp(ops.add_scalar(sim, -inv_tau))
    log_denominator = ops.add_scalar(ops.log(ops.sum(ops.multiply(e, Tensor.wrap(others)), axis=1)), inv_tau)
    positive = ops.sum(ops.multiply(sim, Tensor.wrap(positives)), axis=1)
    return ops.mean(ops.subtract(log_denominator, positive))


def anonymizer_loss(l_t: Tensor, l_b: Tensor, l_penalty: Tensor, lambda_penalty: float, mu: float) -> Tensor:
    """
    ``l_t - min(l_b, mu) + lambda_penalty * l_penalty``. The budget term enters
    with a negative sign, so descending on this objective ascends on l_b
    until the margin mu caps it.
    """
    if lambda_penalty < 0:
        raise DomainException('anonymizer_loss', f'lambda_penalty must be non-negative, got {lambda_penalty}')
    if mu <= 0:
        raise DomainException('anonymizer_loss', f'margin mu must be positive, got {mu}')
    budget = ops.minimum(l_b, mu)
    return ops.add(ops.subtract(l_t, budget), ops.scale(l_penalty, lambda_penalty))


def compose(l_t: Tensor, l_b: Tensor, l_penalty: Tensor, lambda_penalty: float, mu: float) -> LossTerms:
    return LossTerms(l_t, l_b, l_penalty, anonymizer_loss(l_t, l_b, l_penalty, lambda_penalty, mu))


def l1_recon_loss(x: Tensor, reconstruction: Tensor) -> Tensor:
    """
    Sum of |x - reconstruction| over C, H, W, averaged over the batch.
    A 3-D input is treated as a single image.
    """
    if x.shape != reconstruction.shape:
        raise ShapeException('l1_recon_loss', x.shape, reconstruction.shape)
    total = ops.sum(ops.abs(ops.subtract(x, reconstruction)))
    batch = 1 if x.ndim <= 3 else x.shape[0]
    return ops.scale(total, 1.0 / batch)
