"""Multi-species Sherrington-Kirkpatrick model at high temperature.

Order parameters and critical temperatures, exact and MCMC Gibbs averages,
and numerical checks of the TAP equations and cavity identities.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import MSKError
from .model import DisorderSample, ModelSpec, SpeciesLayout, build_layout, sample_disorder
from .order_params import OrderParams, critical_temperatures, q_sensitivity, solve_q
from .presets import PRESETS, preset

__all__ = [
    "__version__",
    "MSKError",
    "ModelSpec",
    "SpeciesLayout",
    "DisorderSample",
    "build_layout",
    "sample_disorder",
    "OrderParams",
    "critical_temperatures",
    "solve_q",
    "q_sensitivity",
    "PRESETS",
    "preset",
]
