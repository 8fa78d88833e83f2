"""Counter-based random streams keyed by (seed, replica).

Replica ``r`` of an experiment seeded with ``seed`` draws from Philox4x64
with key ``(seed, r)``.  Independent sub-streams of one replica (for example
the walk and the field on the left side of the isomorphism) start at
different counter blocks ``(0, 0, 0, stream)``.  Nothing depends on the order
in which replicas are executed, so results are identical under any worker
count.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1

WALK = 0
FIELD = 1
FIELD_B = 2
AUX = 3


def replica_key(seed: int, replica: int) -> int:
    """The 128-bit Philox key of a replica, as one integer (documented split)."""
    return (int(seed) & _MASK) | ((int(replica) & _MASK) << 64)


def replica_rng(seed: int, replica: int, stream: int = WALK) -> np.random.Generator:
    key = np.array([int(seed) & _MASK, int(replica) & _MASK], dtype=np.uint64)
    counter = np.array([0, 0, 0, int(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))
