"""Replica-symmetric order parameter ``q`` and the critical temperatures.

``q`` solves ``q_s = E tanh^2(beta * eta * sqrt((Delta2 Lambda q)_s) + h)``
with ``eta ~ N(0, 1)``.  The expectation is taken with Gauss-Hermite
quadrature and the system is solved by (optionally damped) Picard iteration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.hermite import hermgauss

from .errors import DegenerateModel, NoConvergence, SensitivitySingular
from .linalg import Definiteness, classify_definiteness, spectral_radius, sqrt_diag_congruence
from .model import ModelSpec

log = logging.getLogger(__name__)

DEFAULT_NODES = 61
DAMPING_FLOOR = 0.125


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes and weights with ``E f(eta) ~ sum_k w_k f(x_k)`` for standard normal ``eta``."""

    nodes: np.ndarray
    weights: np.ndarray


@lru_cache(maxsize=8)
def gauss_hermite_rule(n_nodes: int = DEFAULT_NODES) -> QuadratureRule:
    x, w = hermgauss(n_nodes)
    nodes = math.sqrt(2.0) * x
    weights = w / math.sqrt(math.pi)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes, weights)


def gauss_expect(f: Callable[[np.ndarray], np.ndarray], a, h: float, rule: QuadratureRule | None = None):
    """``E f(eta * sqrt(a) + h)`` for ``eta ~ N(0, 1)``.

    ``a`` may be a scalar or an array of variances; ``a == 0`` is evaluated as
    ``f(h)`` directly, with no quadrature rounding.
    """
    rule = rule or gauss_hermite_rule()
    a_arr = np.asarray(a, dtype=np.float64)
    if np.any(a_arr < 0):
        raise ValueError("variance argument must be non-negative")
    root = np.sqrt(a_arr)[..., None]
    vals = f(rule.nodes * root + h) @ rule.weights
    out = np.where(a_arr == 0.0, f(np.full(a_arr.shape, float(h))), vals)
    return float(out) if out.ndim == 0 else out


def tanh2(x):
    return np.tanh(x) ** 2


def _sech(x):
    e = np.exp(-2.0 * np.abs(x))
    return 2.0 * np.sqrt(e) / (1.0 + e)


def tanh2_second_derivative(x):
    """``(2 - 4 sinh^2 x) / cosh^4 x``, written to avoid overflow."""
    s2 = _sech(x) ** 2
    return 2.0 * s2 * s2 - 4.0 * np.tanh(x) ** 2 * s2


def species_field_variance(spec: ModelSpec, q) -> np.ndarray:
    """``(Delta2 Lambda q)_s`` for every species."""
    return spec.delta2 @ (spec.lambdas * np.asarray(q, dtype=np.float64))


def fixed_point_map(spec: ModelSpec, q, rule: QuadratureRule | None = None) -> np.ndarray:
    a = spec.beta**2 * species_field_variance(spec, q)
    return np.atleast_1d(gauss_expect(tanh2, np.maximum(a, 0.0), spec.h, rule))


@dataclass(frozen=True, eq=False)
class Criticality:
    beta_c: float
    beta_0: float
    alpha: int


def critical_temperatures(spec: ModelSpec) -> Criticality:
    """``beta_c = rho(Delta2 Lambda)^{-1/2}``, ``beta_0 = beta_c / sqrt(4 alpha)``.

    ``rho`` is taken on the symmetric similar matrix
    ``Lambda^{1/2} Delta2 Lambda^{1/2}``; ``alpha`` is 2 when ``Delta2`` is
    indefinite and 1 otherwise.
    """
    rho = spectral_radius(sqrt_diag_congruence(spec.delta2, spec.lambdas))
    if rho == 0.0:
        raise DegenerateModel("Delta2 is the zero matrix; beta_c is infinite")
    beta_c = rho**-0.5
    alpha = 2 if classify_definiteness(spec.delta2) is Definiteness.INDEFINITE else 1
    return Criticality(beta_c, beta_c / math.sqrt(4 * alpha), alpha)


def beta_c(spec: ModelSpec) -> float:
    return critical_temperatures(spec).beta_c


def beta_0(spec: ModelSpec) -> tuple[float, int]:
    c = critical_temperatures(spec)
    return c.beta_0, c.alpha


@dataclass(frozen=True, eq=False)
class OrderParams:
    q: np.ndarray
    beta_c: float
    beta_0: float
    alpha: int
    iterations: int
    residual: float
    outside_proven_regime: bool = False
    damping: float = 1.0


def solve_q(
    spec: ModelSpec,
    rule: QuadratureRule | None = None,
    damping: float = 1.0,
    tol: float = 1e-13,
    max_iter: int = 10_000,
    q0=None,
) -> OrderParams:
    """Solve the fixed-point system for ``q`` by damped Picard iteration.

    Starts from ``tanh^2(h)`` in every species unless ``q0`` is given.  The
    damping factor halves whenever the residual grows, down to 0.125.  Above
    ``beta_0`` the result is returned but flagged ``outside_proven_regime``.
    """
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    rule = rule or gauss_hermite_rule()
    try:
        crit = critical_temperatures(spec)
    except DegenerateModel:
        crit = Criticality(math.inf, math.inf, 1)
    outside = spec.beta >= crit.beta_0
    if outside:
        log.warning("beta=%g >= beta_0=%g: fixed point not known to be unique", spec.beta, crit.beta_0)

    if q0 is None:
        q = np.full(spec.m, math.tanh(spec.h) ** 2)
    else:
        q = np.array(q0, dtype=np.float64).reshape(spec.m)
    prev = math.inf
    d = damping
    for it in range(max_iter + 1):
        fq = fixed_point_map(spec, q, rule)
        res = float(np.max(np.abs(fq - q)))
        if res <= tol:
            break
        if res > prev and d > DAMPING_FLOOR:
            d = max(d / 2, DAMPING_FLOOR)
        prev = res
        q = fq if d == 1.0 else (1 - d) * q + d * fq
    else:
        raise NoConvergence(f"solve_q: no convergence in {max_iter} iterations (residual {res:.3g})", q, res)

    # independent re-evaluation of the residual at the returned point
    res = float(np.max(np.abs(fixed_point_map(spec, q, rule) - q)))
    q.setflags(write=False)
    return OrderParams(q, crit.beta_c, crit.beta_0, crit.alpha, it, res, outside, d)


def q_sensitivity(spec: ModelSpec, op: OrderParams, rule: QuadratureRule | None = None) -> np.ndarray:
    """``dq/dbeta`` from the implicit-function linear system ``(I - J) q' = b``.

    ``J[t, r] = beta^2 Delta2[t, r] lambda_r / 2 * E g''`` and
    ``b[t] = beta (Delta2 Lambda q)_t * E g''`` where ``g = tanh^2`` and the
    expectation is at the species-``t`` field.
    """
    rule = rule or gauss_hermite_rule()
    beta = spec.beta
    a = species_field_variance(spec, op.q)
    eg2 = np.atleast_1d(gauss_expect(tanh2_second_derivative, beta**2 * np.maximum(a, 0.0), spec.h, rule))
    jac = 0.5 * beta**2 * spec.delta2 * spec.lambdas[None, :] * eg2[:, None]
    b = beta * a * eg2
    lhs = np.eye(spec.m) - jac
    if abs(np.linalg.det(lhs)) < 1e-12:
        raise SensitivitySingular("I - J is singular at this (beta, q)")
    return np.linalg.solve(lhs, b)
