"""Exact Gibbs averages by enumerating every spin configuration.

Configuration index ``k`` encodes spin ``i`` in bit ``i``: ``s_i = 2*bit_i - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np
from scipy.special import logsumexp

from . import rng
from .errors import DimensionError, InvalidGamma, TooLargeForExact
from .linalg import matrix_abs, sqrt_diag_congruence
from .model import DisorderSample, ModelSpec, SpeciesLayout, interaction_matrix, sample_disorder
from .order_params import OrderParams, critical_temperatures
from .parallel import ordered_map

MAX_EXACT_N = 24
MAX_PAIR_N = 12
MAX_CONCENTRATION_N = 10
_CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class GibbsTable:
    n: int
    log_weights: np.ndarray
    log_z: float
    species_of: np.ndarray
    h: float = 0.0
    decoupled: bool = False  # no interactions: spins are independent

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_weights - self.log_z)


@numba.njit(cache=True, nogil=True)
def _gray_energies(j, h):
    n = j.shape[0]
    out = np.empty(1 << n)
    sigma = -np.ones(n)
    fields = np.empty(n)
    energy = 0.0
    for i in range(n):
        acc = 0.0
        for k in range(n):
            acc += j[i, k] * sigma[k]
        fields[i] = acc + h
        energy += 0.5 * acc * sigma[i] + h * sigma[i]
    out[0] = energy
    gray = 0
    for step in range(1, 1 << n):
        i = 0
        while not (step >> i) & 1:
            i += 1
        energy -= 2.0 * sigma[i] * fields[i]
        sigma[i] = -sigma[i]
        two_s = 2.0 * sigma[i]
        for k in range(n):
            fields[k] += two_s * j[k, i]
        gray ^= 1 << i
        out[gray] = energy
    return out


def spin_rows(n: int, start: int, stop: int) -> np.ndarray:
    """Spin vectors for configuration indices ``start..stop-1`` as a float matrix."""
    idx = np.arange(start, stop, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n, dtype=np.int64)) & 1
    return (2 * bits - 1).astype(np.float64)


def direct_energies(spec: ModelSpec, disorder: DisorderSample) -> np.ndarray:
    """Hamiltonian of every configuration evaluated independently (no recursion)."""
    n = spec.n
    j = interaction_matrix(spec, disorder)
    out = np.empty(1 << n)
    for start in range(0, 1 << n, _CHUNK):
        stop = min(start + _CHUNK, 1 << n)
        s = spin_rows(n, start, stop)
        out[start:stop] = 0.5 * np.einsum("ki,ki->k", s @ j, s) + spec.h * s.sum(axis=1)
    return out


def enumerate_gibbs(
    spec: ModelSpec, layout: SpeciesLayout, disorder: DisorderSample, method: str = "gray"
) -> GibbsTable:
    if spec.n > MAX_EXACT_N:
        raise TooLargeForExact(f"exact enumeration capped at N={MAX_EXACT_N}, got {spec.n}")
    if method == "gray":
        lw = _gray_energies(np.ascontiguousarray(interaction_matrix(spec, disorder)), spec.h)
    elif method == "direct":
        lw = direct_energies(spec, disorder)
    else:
        raise ValueError(f"unknown method {method!r}")
    lw.setflags(write=False)
    decoupled = spec.beta == 0.0 or not np.any(disorder.couplings)
    return GibbsTable(spec.n, lw, float(logsumexp(lw)), layout.species_of, spec.h, decoupled)


def magnetizations(table: GibbsTable) -> np.ndarray:
    n = table.n
    if table.decoupled:
        return np.tanh(np.full(n, table.h))
    p = table.probabilities.reshape((2,) * n)
    out = np.empty(n)
    for i in range(n):
        axis = n - 1 - i
        other = tuple(a for a in range(n) if a != axis)
        marg = p.sum(axis=other)
        out[i] = marg[1] - marg[0]
    return np.clip(out, -1.0, 1.0)


def _walsh_hadamard(x: np.ndarray, n: int) -> np.ndarray:
    y = x.reshape((2,) * n)
    for axis in range(n):
        a = y.take(0, axis=axis)
        b = y.take(1, axis=axis)
        y = np.stack([a + b, a - b], axis=axis)
    return y.reshape(-1)


def xor_distribution(table: GibbsTable) -> np.ndarray:
    """``P(k1 xor k2 = x)`` for two independent replicas, via Walsh-Hadamard."""
    p = table.probabilities
    spec = _walsh_hadamard(p, table.n)
    return _walsh_hadamard(spec * spec, table.n) / (1 << table.n)


def _popcount(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.int64)
    count = np.zeros_like(x)
    while np.any(x):
        count += x & 1
        x >>= 1
    return count


def overlap_distribution(table: GibbsTable) -> tuple[np.ndarray, np.ndarray]:
    """Distinct overlap vectors ``R_12`` and their probabilities under the two-replica measure."""
    if table.n > MAX_PAIR_N:
        raise TooLargeForExact(f"two-replica enumeration capped at N={MAX_PAIR_N}, got {table.n}")
    n = table.n
    species = np.asarray(table.species_of)
    m = int(species.max()) + 1
    sizes = np.bincount(species, minlength=m)
    x = np.arange(1 << n, dtype=np.int64)
    mism = np.empty((x.size, m), dtype=np.int64)
    for s in range(m):
        mask = int(sum(1 << i for i in np.flatnonzero(species == s)))
        mism[:, s] = _popcount(x & mask)
    keys, inverse = np.unique(mism, axis=0, return_inverse=True)
    probs = np.bincount(inverse.reshape(-1), weights=xor_distribution(table), minlength=len(keys))
    overlaps = 1.0 - 2.0 * keys / sizes[None, :]
    return overlaps, probs


def overlap_expectation(table: GibbsTable, f: Callable[[np.ndarray], float]) -> float:
    """``E f(R_12)`` for two independent replicas drawn from the Gibbs measure."""
    overlaps, probs = overlap_distribution(table)
    return float(sum(p * f(r) for r, p in zip(overlaps, probs)))


@dataclass(frozen=True, eq=False)
class OverlapFunctional:
    """Quadratic form ``P(x) = x^T L^{1/2} V L^{1/2} x`` centred at ``q_ref``."""

    v_matrix: np.ndarray
    lambdas: np.ndarray
    q_ref: np.ndarray

    @classmethod
    def from_spec(cls, spec: ModelSpec, q) -> "OverlapFunctional":
        v = matrix_abs(sqrt_diag_congruence(spec.delta2, spec.lambdas))
        return cls(v, spec.lambdas.copy(), np.asarray(q, dtype=np.float64).copy())

    @property
    def form(self) -> np.ndarray:
        root = np.sqrt(self.lambdas)
        return root[:, None] * self.v_matrix * root[None, :]

    def __call__(self, r) -> float:
        x = np.asarray(r, dtype=np.float64) - self.q_ref
        return float(x @ self.form @ x)


@dataclass(frozen=True, eq=False)
class ConcentrationReport:
    n: int
    gamma: float
    mean: float
    stderr: float
    bound: float
    passed: bool
    values: np.ndarray = field(repr=False)
    seeds: tuple[int, ...] = field(repr=False, default=())


def concentration_bound(spec: ModelSpec, gamma: float) -> float:
    """``det(I - (2 gamma + 4 alpha beta^2) V)^{-1/2}``."""
    crit = critical_temperatures(spec)
    v = matrix_abs(sqrt_diag_congruence(spec.delta2, spec.lambdas))
    c = 2 * gamma + 4 * crit.alpha * spec.beta**2
    det = float(np.linalg.det(np.eye(spec.m) - c * v))
    if det <= 0:
        raise InvalidGamma(f"I - {c:.4g} V is not positive definite")
    return det**-0.5


def max_gamma(spec: ModelSpec) -> float:
    """Supremum of admissible ``gamma``: ``(beta_c^2 - 4 alpha beta^2) / 2``."""
    crit = critical_temperatures(spec)
    return 0.5 * (crit.beta_c**2 - 4 * crit.alpha * spec.beta**2)


def concentration_bound_check(
    spec: ModelSpec,
    layout: SpeciesLayout,
    op: OrderParams,
    gamma: float,
    n_disorder: int,
    seed: int,
    threads: int | None = None,
) -> ConcentrationReport:
    """Disorder-averaged ``<exp(gamma N P(R_12 - q))>`` against its determinant bound.

    The inner Gibbs bracket is exact; the disorder average is a Monte Carlo
    mean over ``n_disorder`` draws, reported with its standard error.
    """
    if spec.n > MAX_CONCENTRATION_N:
        raise TooLargeForExact(f"concentration check capped at N={MAX_CONCENTRATION_N}, got {spec.n}")
    if np.asarray(op.q).shape != (spec.m,):
        raise DimensionError("q has the wrong number of species")
    if not 0 <= gamma < max_gamma(spec):
        raise InvalidGamma(f"gamma={gamma} outside [0, {max_gamma(spec):.6g})")
    bound = concentration_bound(spec, gamma)
    functional = OverlapFunctional.from_spec(spec, op.q)
    n = spec.n
    seeds = tuple(rng.derive_seed(seed, d) for d in range(n_disorder))

    def one(draw_seed: int) -> float:
        disorder = sample_disorder(spec, layout, draw_seed)
        table = enumerate_gibbs(spec, layout, disorder)
        return overlap_expectation(table, lambda r: math.exp(gamma * n * functional(r)))

    values = np.array(ordered_map(one, seeds, threads))
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return ConcentrationReport(n, gamma, mean, se, bound, mean <= bound, values, seeds)
