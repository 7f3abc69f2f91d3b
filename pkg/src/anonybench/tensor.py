import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, NamedTuple, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .exception import TapeException

DTYPE = np.float64

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]
VJP = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """
    Dense 64-bit array taking part in reverse-mode differentiation.

    Leaves built with ``requires_grad=True`` accumulate their adjoint in
    :attr:`grad`. Tensors produced by a recorded operation carry the index of
    their record on the owning :class:`Tape` in :attr:`node_id`; constants
    have neither.

    The data array is read-only. Only optimizers replace a leaf's values,
    through :meth:`assign`.
    """
    __slots__ = ('_data', 'grad', 'requires_grad', 'node_id', 'tape', 'name')

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self._data: np.ndarray = _frozen_array(data, copy=True)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad: bool = requires_grad
        self.node_id: Optional[int] = None
        self.tape: Optional['Tape'] = None
        self.name: Optional[str] = name

    @classmethod
    def wrap(cls, data: np.ndarray) -> 'Tensor':
        """ Constant around an already computed array, without copying it. """
        t = cls.__new__(cls)
        t._data = _frozen_array(data, copy=False)
        t.grad = None
        t.requires_grad = False
        t.node_id = None
        t.tape = None
        t.name = None
        return t

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._data.shape

    @property
    def size(self) -> int:
        return int(self._data.size)

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def is_leaf(self) -> bool:
        return self.node_id is None

    def item(self) -> float:
        return float(self._data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return np.array(self._data)

    def detach(self) -> 'Tensor':
        return Tensor.wrap(self._data)

    def assign(self, data: np.ndarray) -> None:
        """ Replaces the values of a leaf (parameter update). """
        if not self.is_leaf:
            raise TapeException('Only leaf tensors can be re-assigned')
        if data.shape != self._data.shape:
            raise TapeException(f'assign: shape {data.shape} does not match {self._data.shape}')
        self._data = _frozen_array(data, copy=True)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray) -> None:
        self.grad = np.array(grad, dtype=DTYPE) if self.grad is None else self.grad + grad

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f' {self.name}' if self.name else ''
        return f'<Tensor{label} shape={self.shape} requires_grad={self.requires_grad}>'

    # Operator sugar; the primitives live in ``ops``.
    def __add__(self, other: Union['Tensor', float]) -> 'Tensor':
        from . import ops
        return ops.add_scalar(self, other) if _is_scalar(other) else ops.add(self, other)

    def __radd__(self, other: float) -> 'Tensor':
        return self.__add__(other)

    def __sub__(self, other: Union['Tensor', float]) -> 'Tensor':
        from . import ops
        return ops.add_scalar(self, -float(other)) if _is_scalar(other) else ops.subtract(self, other)

    def __rsub__(self, other: float) -> 'Tensor':
        from . import ops
        return ops.add_scalar(ops.neg(self), float(other))

    def __mul__(self, other: Union['Tensor', float]) -> 'Tensor':
        from . import ops
        return ops.scale(self, other) if _is_scalar(other) else ops.multiply(self, other)

    def __rmul__(self, other: float) -> 'Tensor':
        return self.__mul__(other)

    def __neg__(self) -> 'Tensor':
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other: 'Tensor') -> 'Tensor':
        from . import ops
        return ops.matmul(self, other)


def _is_scalar(value) -> bool:
    return isinstance(value, (int, float, np.floating, np.integer))


def _frozen_array(data: ArrayLike, copy: bool) -> np.ndarray:
    arr = np.array(data, dtype=DTYPE) if copy else np.asarray(data, dtype=DTYPE)
    arr.flags.writeable = False
    return arr


class Record(NamedTuple):
    kind: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    vjp: VJP


_local = threading.local()


def _stack() -> List[Optional['Tape']]:
    if not hasattr(_local, 'stack'):
        _local.stack = []
    return _local.stack


def active_tape() -> Optional['Tape']:
    stack = _stack()
    return stack[-1] if stack else None


class Tape:
    """
    Ordered list of recorded operations. Entering the tape as a context
    manager makes it the active tape of the current thread; operations
    evaluated while no tape is active are not recorded.
    """
    def __init__(self):
        self._records: List[Record] = []

    def __enter__(self) -> 'Tape':
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> bool:
        _stack().pop()
        return False

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self) -> List[Record]:
        return self._records

    def record(self, kind: str, inputs: Tuple[Tensor, ...], data: np.ndarray, vjp: VJP) -> Tensor:
        for t in inputs:
            if t.node_id is not None and t.tape is not self:
                raise TapeException(f'{kind}: input was recorded on a different tape')
        out = Tensor.wrap(data)
        out.requires_grad = True
        out.node_id = len(self._records)
        out.tape = self
        self._records.append(Record(kind, inputs, out, vjp))
        return out

    def backward(self, loss: Tensor) -> None:
        """
        Propagates adjoints from a scalar loss to every differentiable leaf
        that contributed to it. Leaf gradients accumulate across calls.
        """
        if loss.size != 1:
            raise TapeException(f'backward: loss must be scalar, got shape {loss.shape}')
        if loss.node_id is None:
            if loss.requires_grad:
                loss.accumulate_grad(np.ones(loss.shape, dtype=DTYPE))
            return
        if loss.tape is not self:
            raise TapeException('backward: loss was recorded on a different tape')

        adjoints: Dict[int, np.ndarray] = {loss.node_id: np.ones(loss.shape, dtype=DTYPE)}
        for rec in reversed(self._records[:loss.node_id + 1]):
            g = adjoints.pop(rec.output.node_id, None)
            if g is None:
                continue
            for inp, gi in zip(rec.inputs, rec.vjp(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if inp.node_id is None:
                    inp.accumulate_grad(gi)
                elif inp.node_id in adjoints:
                    adjoints[inp.node_id] = adjoints[inp.node_id] + gi
                else:
                    adjoints[inp.node_id] = gi

    def ancestors(self, output: Tensor) -> Set[int]:
        """ ``id()`` of every tensor the recorded output was computed from. """
        seen: Set[int] = set()
        if output.node_id is None or output.tape is not self:
            return seen
        pending = [output.node_id]
        visited: Set[int] = set()
        while pending:
            node = pending.pop()
            if node in visited:
                continue
            visited.add(node)
            for inp in self._records[node].inputs:
                seen.add(id(inp))
                if inp.node_id is not None:
                    pending.append(inp.node_id)
        return seen

    def depends_on(self, output: Tensor, tensor: Tensor) -> bool:
        return id(tensor) in self.ancestors(output)


@contextmanager
def no_record() -> Iterator[None]:
    """ Suspends recording on the current thread (evaluation of frozen networks). """
    _stack().append(None)
    try:
        yield
    finally:
        _stack().pop()


def apply(kind: str, inputs: Tuple[Tensor, ...], data: np.ndarray, vjp: VJP) -> Tensor:
    tape = active_tape()
    if tape is None or not any(t.requires_grad for t in inputs):
        return Tensor.wrap(data)
    return tape.record(kind, inputs, data, vjp)


def backward(loss: Tensor) -> None:
    if loss.tape is not None:
        loss.tape.backward(loss)
    elif loss.size != 1:
        raise TapeException(f'backward: loss must be scalar, got shape {loss.shape}')
    elif loss.requires_grad:
        loss.accumulate_grad(np.ones(loss.shape, dtype=DTYPE))
    else:
        raise TapeException('backward: loss is a constant, nothing was recorded')


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)
