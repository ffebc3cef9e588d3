"""Counter-based RNG substreams for reproducible, partition-invariant ensembles.

Every random draw in an ensemble run comes from a stream keyed by
(seed, sample index), so splitting the index range across workers or chunks
cannot change any sample's result.
"""

import numpy as np

_MASK64 = (1 << 64) - 1

# Lane separates independent uses of randomness for the same sample
# (e.g. the main chain run vs. the polarity-swap probe).
MAIN_LANE = 0
PROBE_LANE = 1


def sample_rng(seed: int, index: int, lane: int = MAIN_LANE) -> np.random.Generator:
    """Return the dedicated generator for one ensemble sample.

    The stream is a Philox counter stream keyed on (seed, 2*index + lane);
    identical arguments always yield an identical stream.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    if index < 0:
        raise ValueError(f"sample index must be non-negative, got {index}")
    if lane not in (MAIN_LANE, PROBE_LANE):
        raise ValueError(f"unknown rng lane {lane}")
    key = np.array([seed & _MASK64, ((index << 1) | lane) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
