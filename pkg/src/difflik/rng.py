"""Deterministic random streams.

All randomness in the package is produced by numpy's PCG64 bit generator,
seeded through ``numpy.random.SeedSequence``. PCG64 is a published,
platform-independent algorithm, so any (seed, key) pair reproduces the same
stream on every machine. There is no global generator: every stochastic
operation takes an explicit seed or an explicit ``numpy.random.Generator``.

Substreams are derived from a root seed plus a key path, e.g.
``stream(seed, "probes", sample_index)``. Independent keys give
statistically independent streams, which is what makes parallel batch
evaluation reproduce the serial order bit for bit: worker i draws from
``stream(seed, tag, i)`` regardless of scheduling.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    if isinstance(part, str):
        # crc32 is stable across platforms and Python versions.
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"stream key parts must be int or str, got {type(part)!r}")


def stream(seed: int, *key) -> np.random.Generator:
    """Return a PCG64 generator for the substream identified by ``key``."""
    entropy = (_key_to_int(seed),) + tuple(_key_to_int(p) for p in key)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def substream_seed(seed: int, *key) -> int:
    """Derive a new integer seed from (seed, key), for APIs that take seeds."""
    entropy = (_key_to_int(seed),) + tuple(_key_to_int(p) for p in key)
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])
