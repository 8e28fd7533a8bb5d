"""Named random streams derived from one master seed.

Each component (environment, exploration, replay sampling, perturbations,
target noise, ...) draws from its own generator so that switching one
component off, or changing how many numbers it consumes, leaves all the
other streams untouched.
"""

import zlib

import numpy as np

STREAM_NAMES = (
    "init",
    "env",
    "exploration",
    "replay",
    "perturbation",
    "target-noise",
    "reward-wrapper",
)


def stream(seed, name):
    """Return a ``numpy.random.Generator`` for ``name`` under master ``seed``."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


def streams(seed, names=STREAM_NAMES):
    return {name: stream(seed, name) for name in names}
