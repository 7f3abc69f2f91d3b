from abc import ABC, abstractmethod
from typing import Dict, Optional

import numpy as np
from overrides import overrides

from .config import OPTIMIZER_ADAM, OPTIMIZER_SGD, SCHEDULE_CONSTANT, SCHEDULE_WARMUP_STEP, TrainConfig
from .exception import ConfigException, NumericalException
from .nets import Parameters


class Optimizer(ABC):
    """
    Applies the accumulated gradients of one parameter group. Parameters
    without a gradient are left untouched.
    """
    def __init__(self, params: Parameters, lr: float):
        self._params: Parameters = params
        self._lr: float = lr

    @property
    def params(self) -> Parameters:
        return self._params

    @property
    def lr(self) -> float:
        return self._lr

    @lr.setter
    def lr(self, lr: float) -> None:
        self._lr = lr

    def step(self) -> None:
        for name, tensor in self._params.items():
            if tensor.grad is None:
                continue
            if not np.all(np.isfinite(tensor.grad)):
                raise NumericalException(f'non-finite gradient for {name}', self._params.owner)
            tensor.assign(self._update(name, tensor.data, tensor.grad))

    @abstractmethod
    def _update(self, name: str, value: np.ndarray, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError('Subclasses of Optimizer must implement `_update`')

    def state(self) -> Dict[str, np.ndarray]:
        return {}

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        pass


class SGD(Optimizer):
    """ Plain gradient descent with a fixed rate. """
    @overrides
    def _update(self, name: str, value: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return value - self._lr * grad


class Adam(Optimizer):
    """ Adam with bias correction; moments and step count are checkpointed. """
    def __init__(self, params: Parameters, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(params, lr)
        self._beta1 = beta1
        self._beta2 = beta2
        self._eps = eps
        self._m: Dict[str, np.ndarray] = {}
        self._v: Dict[str, np.ndarray] = {}
        self._t: int = 0

    @overrides
    def step(self) -> None:
        self._t += 1
        super().step()

    @overrides
    def _update(self, name: str, value: np.ndarray, grad: np.ndarray) -> np.ndarray:
        m = self._beta1 * self._m.get(name, np.zeros_like(value)) + (1.0 - self._beta1) * grad
        v = self._beta2 * self._v.get(name, np.zeros_like(value)) + (1.0 - self._beta2) * grad * grad
        self._m[name] = m
        self._v[name] = v
        m_hat = m / (1.0 - self._beta1 ** self._t)
        v_hat = v / (1.0 - self._beta2 ** self._t)
        return value - self._lr * m_hat / (np.sqrt(v_hat) + self._eps)

    @overrides
    def state(self) -> Dict[str, np.ndarray]:
        out = {'t': np.array([float(self._t)])}
        out.update({f'm/{k}': v for k, v in self._m.items()})
        out.update({f'v/{k}': v for k, v in self._v.items()})
        return out

    @overrides
    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        self._t = int(state['t'][0]) if 't' in state else 0
        self._m = {k[2:]: np.array(v) for k, v in state.items() if k.startswith('m/')}
        self._v = {k[2:]: np.array(v) for k, v in state.items() if k.startswith('v/')}


def build_optimizer(config: TrainConfig, params: Parameters, lr: float) -> Optimizer:
    if config.optimizer == OPTIMIZER_SGD:
        return SGD(params, lr)
    if config.optimizer == OPTIMIZER_ADAM:
        return Adam(params, lr, config.adam_beta1, config.adam_beta2, config.adam_eps)
    raise ConfigException(f'Unknown optimizer {config.optimizer!r}', 'optimizer')


class Schedule(ABC):
    """ Per-epoch learning rate of a probe. """
    def __init__(self, base_lr: float):
        self._base_lr = base_lr

    @abstractmethod
    def rate(self, epoch: int) -> float:
        raise NotImplementedError('Subclasses of Schedule must implement `rate`')

    def observe(self, epoch_loss: float) -> None:
        pass


class ConstantSchedule(Schedule):
    @overrides
    def rate(self, epoch: int) -> float:
        return self._base_lr


class WarmupStepSchedule(Schedule):
    """
    Linear warmup over ``warmup`` epochs, then the rate is divided by 5 each
    time the epoch loss fails to improve by ``tolerance`` for ``patience``
    consecutive epochs.
    """
    FACTOR = 0.2

    def __init__(self, base_lr: float, warmup: int, patience: int, tolerance: float):
        super().__init__(base_lr)
        self._warmup = warmup
        self._patience = patience
        self._tolerance = tolerance
        self._scale = 1.0
        self._best: Optional[float] = None
        self._stale = 0

    @overrides
    def rate(self, epoch: int) -> float:
        if epoch < self._warmup:
            return self._base_lr * (epoch + 1) / (self._warmup + 1)
        return self._base_lr * self._scale

    @overrides
    def observe(self, epoch_loss: float) -> None:
        if self._best is None or epoch_loss < self._best - self._tolerance:
            self._best = epoch_loss
            self._stale = 0
            return
        self._stale += 1
        if self._stale >= self._patience:
            self._scale *= self.FACTOR
            self._stale = 0


def build_schedule(config: TrainConfig, base_lr: float) -> Schedule:
    if config.probe_schedule == SCHEDULE_CONSTANT:
        return ConstantSchedule(base_lr)
    if config.probe_schedule == SCHEDULE_WARMUP_STEP:
        return WarmupStepSchedule(base_lr, config.warmup_epochs, config.plateau_patience, config.plateau_tolerance)
    raise ConfigException(f'Unknown probe schedule {config.probe_schedule!r}', 'probe_schedule')
