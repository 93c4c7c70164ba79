"""Counter-based random streams.

A stream is identified by a seed plus a tuple of integer keys (purpose,
step, record index, ...). The same identity always yields the same
numbers, independent of how many other streams were drawn before, which
is what makes resume and parallel workers reproducible.
"""

import zlib
from typing import Union

import numpy as np
import torch

Key = Union[int, str]


def _key_words(keys: tuple) -> list[int]:
    words = []
    for key in keys:
        if isinstance(key, str):
            words.append(zlib.crc32(key.encode("utf-8")))
        else:
            words.append(int(key) & 0xFFFFFFFF)
    return words


def stream(seed: int, *keys: Key) -> np.random.Generator:
    """Numpy generator for (seed, *keys) backed by the Philox counter RNG."""
    seq = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *_key_words(keys)])
    return np.random.Generator(np.random.Philox(seq))


def torch_generator(seed: int, *keys: Key) -> torch.Generator:
    """Torch CPU generator seeded from the same (seed, *keys) identity."""
    seq = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *_key_words(keys)])
    gen = torch.Generator(device="cpu")
    gen.manual_seed(int(seq.generate_state(1, dtype=np.uint64)[0] & 0x7FFFFFFFFFFFFFFF))
    return gen
