"""Per-replica seed derivation.

Every replica gets its own stream derived from ``(master_seed, replica,
stream)``, so results do not depend on how replicas are scheduled.
"""

from __future__ import annotations

import numpy as np

WALK = 0
GRAPH = 1
START = 2


def replica_seeds(master_seed: int, replicas: int, stream: int, *, offset: int = 0) -> np.ndarray:
    """Seeds for replicas ``offset .. offset + replicas - 1``.

    Walk streams are 32-bit (they seed the jitted generator); graph streams
    are 63-bit so they can be printed and re-used as ``graph_seed``.
    """
    out = np.empty(replicas, dtype=np.int64)
    for i in range(replicas):
        ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, offset + i, stream])
        if stream == GRAPH:
            out[i] = int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
        else:
            out[i] = int(ss.generate_state(1, dtype=np.uint32)[0])
    return out
