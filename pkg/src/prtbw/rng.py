"""Counter-based random streams.

Every replicate draws from ``stream(seed, *counters)``: a Philox generator
keyed by the seed and the replicate's coordinates, so results do not depend
on the order in which parallel workers run.
"""

import numpy as np


def stream(seed: int, *counters: int) -> np.random.Generator:
    key = np.random.SeedSequence([int(seed), *[int(c) for c in counters]])
    return np.random.Generator(np.random.Philox(key))
