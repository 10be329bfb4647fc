"""Built-in model families.

``bipartite`` keeps only inter-species couplings; ``two-copies`` keeps only
intra-species couplings (two decoupled SK systems); ``convex`` is a positive
definite two-species profile; ``sk`` is the single-species reduction.
"""

from __future__ import annotations

import numpy as np

from .model import ModelSpec

PRESETS: dict[str, dict] = {
    "sk": {"lambdas": [1.0], "delta2": [[1.0]]},
    "bipartite": {"lambdas": [0.5, 0.5], "delta2": [[0.0, 1.0], [1.0, 0.0]]},
    "two-copies": {"lambdas": [0.5, 0.5], "delta2": [[1.0, 0.0], [0.0, 2.0]]},
    "convex": {"lambdas": [0.5, 0.5], "delta2": [[2.0, 1.0], [1.0, 2.0]]},
}


def preset(name: str, *, beta: float = 0.0, h: float = 0.0, n: int = 2) -> ModelSpec:
    try:
        p = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return ModelSpec(np.array(p["lambdas"]), np.array(p["delta2"]), beta, h, n)
