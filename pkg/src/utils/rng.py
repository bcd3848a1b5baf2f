from typing import Sequence, Union

import numpy as np

ModeKey = Union[int, Sequence[int]]


def make_generator(seed: int, replication_id: int = 0, mode: ModeKey = ()) -> np.random.Generator:
    """Counter-based generator keyed by (seed, replication, mode).

    Draw k of the returned stream is the noise of step k for that mode, so a
    given (seed, replication, mode, step) always yields the same normal
    regardless of truncation, worker assignment or execution order.
    """
    key = [int(seed), int(replication_id)] + [int(v) for v in np.atleast_1d(mode)]
    if any(v < 0 for v in key):
        raise ValueError(f"generator key entries must be non-negative, got {key}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def mode_normals(seed: int, replication_id: int, modes: np.ndarray, steps: int) -> np.ndarray:
    """Standard normals of shape (K, steps), row k drawn from the stream of modes[k]"""
    out = np.empty((len(modes), steps))
    for row, mode in enumerate(np.asarray(modes).reshape(len(modes), -1)):
        out[row] = make_generator(seed, replication_id, mode).standard_normal(steps)
    return out
