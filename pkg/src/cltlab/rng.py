"""Counter-based random streams.

Every stream is keyed by (global seed, *key integers) through a Philox
generator, so replicates can be produced in any order, on any number of
threads, with bit-exact replay.
"""

from __future__ import annotations

import numpy as np

# stream roles, part of the key
ROLE_INIT = 0
ROLE_STEP = 1
ROLE_INNOVATION = 2
ROLE_BOOTSTRAP = 3
ROLE_CALIBRATION = 4
ROLE_CENTERING = 5


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the given (seed, key...) tuple."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
