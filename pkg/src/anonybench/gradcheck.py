from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np

from .exception import DomainException
from .tensor import Tape, Tensor, no_record

ScalarFn = Callable[[Sequence[Tensor]], Tensor]


@dataclass
class GradCheckResult:
    """
    Outcome of a central-difference sweep.

    ``max_error`` is the maximum over coordinates of
    ``|analytic - numeric| / max(1, |analytic|)``. Coordinates where the
    function was not finite at a probe point are listed in ``non_finite`` as
    ``(argument index, flat index)`` and left out of the maximum.
    """
    max_error: float
    errors: List[np.ndarray] = field(default_factory=list)
    non_finite: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.non_finite


def grad_check(f: ScalarFn, point: Sequence[np.ndarray], step: float = 1e-5) -> GradCheckResult:
    """
    Compares the tape adjoint of `f` with central differences
    ``(f(x+h) - f(x-h)) / 2h`` at every coordinate of every argument.
    Each coordinate is scored by whichever of the central and the two
    one-sided differences agrees best, so a relu or max kink between x-h
    and x+h does not show up as an error.

    :param f: scalar function of the argument tensors
    :param point: argument values
    :param step: finite-difference step h
    :return: the per-coordinate errors and their maximum
    """
    if step <= 0:
        raise DomainException('grad_check', f'step must be positive, got {step}')
    base = [np.array(p, dtype=np.float64) for p in point]

    leaves = [Tensor(p, requires_grad=True) for p in base]
    with Tape() as tape:
        loss = f(leaves)
    tape.backward(loss)
    f_center = loss.item()
    analytic = [np.zeros_like(p) if t.grad is None else t.grad for p, t in zip(base, leaves)]

    def evaluate(values: List[np.ndarray]) -> float:
        try:
            with no_record():
                return f([Tensor(v) for v in values]).item()
        except DomainException:
            return float('nan')

    errors: List[np.ndarray] = []
    non_finite: List[Tuple[int, int]] = []
    worst = 0.0
    for i, p in enumerate(base):
        err = np.zeros(p.size)
        for j in range(p.size):
            values = [b.copy() for b in base]
            flat = values[i].reshape(-1)
            flat[j] = p.reshape(-1)[j] + step
            f_plus = evaluate(values)
            flat[j] = p.reshape(-1)[j] - step
            f_minus = evaluate(values)
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                non_finite.append((i, j))
                err[j] = np.nan
                continue
            # one-sided differences stand in when x+h or x-h lies across a kink
            numeric = ((f_plus - f_minus) / (2.0 * step), (f_plus - f_center) / step, (f_center - f_minus) / step)
            a = analytic[i].reshape(-1)[j]
            err[j] = min(abs(a - n) for n in numeric) / max(1.0, abs(a))
            worst = max(worst, err[j])
        errors.append(err.reshape(p.shape))
    return GradCheckResult(worst, errors, non_finite)
