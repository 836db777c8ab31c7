"""Deterministic RNG streams.

Every random draw in the library flows from one top-level integer seed.
Components pull independent child streams via ``stream(seed, *path)``,
where ``path`` starts with one of the component codes below (plus any
per-item indices, e.g. the sample index in a dataset).  The same
(seed, path) always yields the same generator, so results are
reproducible across runs and components never share a stream.
"""

from __future__ import annotations

import numpy as np

STREAM_DATASET = 0
STREAM_MODEL_INIT = 1
STREAM_TRAIN_SHUFFLE = 2
STREAM_GRADCHECK = 3


def stream(seed: int, *path: int) -> np.random.Generator:
    """Child generator for (seed, path); deterministic and collision-free."""
    return np.random.default_rng([int(seed), *(int(p) for p in path)])
