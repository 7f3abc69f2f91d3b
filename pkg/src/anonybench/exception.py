from typing import Optional, Sequence, Tuple


class AnonybenchException(Exception):
    """ Benchmark generic exception """
    exit_code: int = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ShapeException(AnonybenchException):
    """ Operand shapes do not conform to the primitive's shape rule """
    def __init__(self, primitive: str, *shapes: Sequence[int]):
        self.primitive: str = primitive
        self.shapes: Tuple[Tuple[int, ...], ...] = tuple(tuple(s) for s in shapes)
        rendered = ' vs '.join(str(s) for s in self.shapes)
        super().__init__(f'{primitive}: incompatible shapes {rendered}')


class DomainException(AnonybenchException):
    """ A value lies outside the domain of the primitive or loss """
    def __init__(self, primitive: str, message: str):
        super().__init__(f'{primitive}: {message}')
        self.primitive: str = primitive


class TapeException(AnonybenchException):
    """ Misuse of the differentiation tape """


class NumericalException(AnonybenchException):
    """ NaN or Inf showed up while training """
    exit_code = 3

    def __init__(self, message: str, stage: str):
        super().__init__(f'{stage}: {message}')
        self.stage: str = stage


class StepIsolationException(AnonybenchException):
    """ A network that should be frozen was modified by a training step """
    exit_code = 3

    def __init__(self, message: str, network: str):
        super().__init__(message)
        self.network: str = network


class ConfigException(AnonybenchException):
    """ Invalid configuration key or value, or an incompatible checkpoint """
    exit_code = 2

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key: Optional[str] = key


class ArtifactIOException(AnonybenchException):
    """ An artifact could not be read or written """
    exit_code = 4

    def __init__(self, message: str, path: str):
        super().__init__(message)
        self.path: str = path
