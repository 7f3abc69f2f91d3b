import hashlib

import numpy as np


def derive_seed(master: int, *labels) -> int:
    """
    Splittable seed scheme: ``seed <- hash(master, label...)``.
    Labels are rendered with ``repr`` so ``('train', 3)`` and ``('train', '3')`` differ.
    """
    key = '/'.join([str(int(master))] + [repr(label) for label in labels]).encode('utf-8')
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), 'little') & (2 ** 63 - 1)


def rng_for(master: int, *labels) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *labels))
