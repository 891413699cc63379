"""Named random substreams derived from one master seed."""

from __future__ import annotations

import zlib

import numpy as np


def substream(master_seed: int, name: str) -> np.random.SeedSequence:
    """Independent, reproducible seed sequence for a named consumer.

    The name is hashed with CRC-32, so adding a consumer never shifts the
    streams of the existing ones.
    """
    return np.random.SeedSequence([int(master_seed), zlib.crc32(name.encode())])


def generator(master_seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(substream(master_seed, name))
