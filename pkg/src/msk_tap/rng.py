"""Counter-based random streams keyed by (seed, stream id).

Every random quantity in the package is drawn from a Philox generator whose
128-bit key is ``(seed, stream)``.  Disorder uses stream 0 and MCMC replica
``r`` uses stream ``r + 1``, so no generator state is ever shared between
workers.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

DISORDER_STREAM = 0
_U64 = 1 << 64


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < _U64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def stream(seed: int, stream_id: int) -> np.random.Generator:
    key = np.array([check_seed(seed), check_seed(stream_id)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def replica_stream(seed: int, replica: int) -> np.random.Generator:
    return stream(seed, replica + 1)


def open_uniforms(gen: np.random.Generator, size) -> np.ndarray:
    """Uniforms on the open interval (0, 1) with 53-bit resolution."""
    k = gen.integers(0, 1 << 53, size=size, dtype=np.uint64)
    return (k.astype(np.float64) + 0.5) * 2.0**-53


def standard_normals(gen: np.random.Generator, size) -> np.ndarray:
    """Standard normal variates by inverse-CDF transform of open uniforms."""
    return ndtri(open_uniforms(gen, size))


def derive_seed(seed: int, *path: int) -> int:
    """Child seed for a sub-task (e.g. disorder draw ``d`` of a study)."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def entropy_seed() -> int:
    return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])
